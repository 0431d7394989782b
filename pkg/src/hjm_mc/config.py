"""Run configuration: TOML file sections plus command-line overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .grid import Grid, build_nested_grid, build_uniform_grid
from .models import PARAMS, make_model
from .payoff import builtin_rule, make_payoff


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    model: str = "ho_lee"
    model_params: dict = field(default_factory=dict)
    payoff: str = "linear"
    payoff_params: dict = field(default_factory=dict)
    N: int = 10
    L: int = 10
    t_max: float = 1.0
    tau_max: float = 2.0
    tau_a: float | None = None  # defaults to t_max
    grid_kind: str = "nested"  # "nested" falls back from uniform only when nesting fails
    scheme: str = "efd"
    rule: str = "simpson"
    M: int = 1000
    M_dual: int | None = None  # None -> max(100, M // 10)
    seed: int = 0
    c0: float = 1.65
    antithetic: bool = False
    tol_stat: float | None = None
    M_max: int | None = None
    workers: int = 1
    out: str | None = None
    levels: tuple = ()  # ((N, L), ...) for studies
    reference: str = "auto"  # auto | none | self
    ref_factor: int = 8
    M_ref: int | None = None

    @property
    def tau_a_eff(self) -> float:
        return self.t_max if self.tau_a is None else self.tau_a

    @property
    def M_dual_eff(self) -> int:
        if self.M_dual is not None:
            return self.M_dual
        m = max(100, self.M // 10)
        return m + (m % 2) if self.antithetic else m

    def build_model(self):
        return make_model(self.model, dict(self.model_params) or None)

    def build_payoff(self):
        return make_payoff(self.payoff, self.tau_a_eff, **self.payoff_params)

    def build_rule(self):
        return builtin_rule(self.rule)

    def build_grid(self, N: int | None = None, L: int | None = None) -> Grid:
        N = self.N if N is None else N
        L = self.L if L is None else L
        build = build_uniform_grid if self.grid_kind == "uniform" else build_nested_grid
        return build(N, L, self.t_max, self.tau_max, self.tau_a_eff)

    def validate(self) -> "RunConfig":
        if self.model not in PARAMS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.scheme not in ("efd", "efe"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.grid_kind not in ("uniform", "nested"):
            raise ConfigError(f"unknown grid kind {self.grid_kind!r}")
        if self.M < 2:
            raise ConfigError("M must be at least 2")
        if self.antithetic and (self.M % 2 or self.M_dual_eff % 2):
            raise ConfigError("M and M_dual must be even with antithetic sampling")
        if self.c0 <= 0:
            raise ConfigError("c0 must be positive")
        if self.reference not in ("auto", "none", "self"):
            raise ConfigError(f"unknown reference {self.reference!r}")
        self.build_model()
        self.build_payoff()
        self.build_rule()
        for N, L in self.levels or ((self.N, self.L),):
            self.build_grid(N, L)
        return self


_SECTIONS = {
    "model": {"kind": "model"},
    "payoff": {"kind": "payoff"},
    "grid": {"N": "N", "L": "L", "t_max": "t_max", "tau_max": "tau_max", "tau_a": "tau_a", "kind": "grid_kind"},
    "run": {k: k for k in ("scheme", "rule", "M", "M_dual", "seed", "c0", "antithetic", "tol_stat", "M_max",
                           "workers", "out")},
    "study": {"levels": "levels"},
    "reference": {"kind": "reference", "factor": "ref_factor", "M_ref": "M_ref"},
}


def config_from_dict(data: dict) -> RunConfig:
    kw: dict = {}
    for section, keys in _SECTIONS.items():
        sec = dict(data.get(section, {}))
        for src, dst in keys.items():
            if src in sec:
                kw[dst] = sec.pop(src)
        if section == "model":
            kw["model_params"] = sec
        elif section == "payoff":
            kw["payoff_params"] = sec
        elif sec:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(sec)}")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    if "levels" in kw:
        kw["levels"] = tuple(tuple(int(v) for v in lv) for lv in kw["levels"])
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh))


def with_overrides(cfg: RunConfig, **over) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    return replace(cfg, **{k: v for k, v in over.items() if v is not None and k in names})
