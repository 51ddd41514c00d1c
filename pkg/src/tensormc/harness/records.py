import csv
from dataclasses import astuple, dataclass, fields

COLUMNS = ("method", "K", "N", "seed", "estimate", "ground_truth", "elapsed_ns")


@dataclass(frozen=True)
class EstimateRecord:
    method: str
    K: int
    N: int
    seed: int
    estimate: float
    ground_truth: float
    elapsed_ns: int

    def __post_init__(self):
        if self.elapsed_ns < 0:
            raise ValueError("elapsed_ns must be non-negative")


def _fmt(v):
    return format(v, ".17g") if isinstance(v, float) else str(v)


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in astuple(r)])


def read_csv(path):
    types = {f.name: f.type for f in fields(EstimateRecord)}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [EstimateRecord(**{k: types[k](row[k]) for k in COLUMNS}) for row in reader]
