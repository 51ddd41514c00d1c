"""Experiment configuration files.

Plain ``key = value`` lines grouped into one ``[section]`` per experiment::

    [hierarchical-k]
    model = hierarchical     # hierarchical | chain
    n = 128                  # data points (hierarchical) or latents (chain)
    data_seed = 0
    methods = tmc, smc, iwae # any of vae, iwae, tmc, tmc-nonfactorised, smc
    k = 4, 16, 64, 256
    seeds = 10               # seeds per (method, K) point
    seed_base = 0            # optional; seeds run seed_base .. seed_base+seeds-1
    proposal = marginal      # optional; marginal | prior | prior-diagonal

Without ``proposal``, ``tmc-nonfactorised`` uses the prior and every other
method uses the generative marginals.  "prior" draws each latent's parent
sample uniformly at random; "prior-diagonal" pairs draw k with parent draw k.  Comments start with ``#`` or ``;``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass

from ..errors import ConfigError
from ..estimators import METHODS

MAX_K = 4096
MAX_N = 1024
MODELS = ("hierarchical", "chain")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: str
    n: int
    data_seed: int
    methods: tuple
    ks: tuple
    seeds: int
    seed_base: int = 0
    proposal: str | None = None

    def validate(self, allow_large: bool = False):
        if self.model not in MODELS:
            raise ConfigError(f"[{self.name}] unknown model {self.model!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"[{self.name}] unknown method {m!r}")
        if not self.ks or min(self.ks) < 1:
            raise ConfigError(f"[{self.name}] every K must be >= 1")
        if self.seeds < 1:
            raise ConfigError(f"[{self.name}] seeds must be >= 1")
        if self.n < 1:
            raise ConfigError(f"[{self.name}] n must be >= 1")
        if self.proposal not in (None, "marginal", "prior", "prior-diagonal"):
            raise ConfigError(f"[{self.name}] unknown proposal {self.proposal!r}")
        if not allow_large and (max(self.ks) > MAX_K or self.n > MAX_N):
            raise ConfigError(f"[{self.name}] K <= {MAX_K} and n <= {MAX_N} unless large runs are allowed")
        return self


def _ints(text):
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError as e:
        raise ConfigError(str(e)) from None


def parse_config(text: str, allow_large: bool = False) -> list:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    out = []
    for name in cp.sections():
        s = cp[name]
        try:
            cfg = ExperimentConfig(
                name=name,
                model=s.get("model", "hierarchical").strip(),
                n=s.getint("n"),
                data_seed=s.getint("data_seed", 0),
                methods=tuple(m.strip() for m in s["methods"].split(",") if m.strip()),
                ks=_ints(s["k"]),
                seeds=s.getint("seeds", 1),
                seed_base=s.getint("seed_base", 0),
                proposal=s.get("proposal", None),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"[{name}] {e}") from None
        out.append(cfg.validate(allow_large))
    if not out:
        raise ConfigError("config has no experiment sections")
    return out


def load_config(path, allow_large: bool = False) -> list:
    with open(path) as fh:
        return parse_config(fh.read(), allow_large)
