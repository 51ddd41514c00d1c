from .bench import run_cost_benchmark
from .config import ExperimentConfig, load_config, parse_config
from .records import EstimateRecord, read_csv, write_csv
from .sweep import run_sweep
from .verify import verify_suite
