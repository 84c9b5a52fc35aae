"""Experiment configuration: strict dotted-key TOML files and run manifests.

Every key has a documented default (``DEFAULTS``); unknown keys are errors.
A file may use nested tables or dotted keys interchangeably, e.g.

    [model]
    L = 50
    density.kind = "uniform"

is the same as ``model.L = 50`` and ``model.density.kind = "uniform"`` at top level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .model import ModelConfig, SequenceSpec, SingleSiteDensity


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _seq_defaults(prefix: str, value: float) -> dict:
    return {
        f"{prefix}.kind": "constant",
        f"{prefix}.value": value,
        f"{prefix}.values": [],
        f"{prefix}.start": 0,
        f"{prefix}.fill": 1.0,
        f"{prefix}.C": 1.0,
        f"{prefix}.zeta": 0.0,
    }


DEFAULTS: dict = {
    "model.density.kind": "uniform",
    "model.density.lo": 0.0,
    "model.density.hi": 1.0,
    "model.density.breaks": [],
    "model.density.heights": [],
    **_seq_defaults("model.a", 1.0),
    **_seq_defaults("model.c", 0.0),
    **_seq_defaults("model.d", 1.0),
    "model.L": 50,
    "model.master_seed": 0,
    "model.samples": 200,
    # decay
    "decay.n_ref": [0],
    "decay.m_min": -30,
    "decay.m_max": 30,
    "decay.fit_kind": "exponential",
    "decay.zeta": 0.25,
    "decay.fit_min": 5,
    "decay.fit_max": 30,
    # detcheck
    "detcheck.instances": 200,
    "detcheck.L_max": 8,
    "detcheck.h": 1e-5,
    "detcheck.x_lo": 0.1,
    "detcheck.x_hi": 10.0,
    "detcheck.a_lo": 0.5,
    "detcheck.a_hi": 2.0,
    "detcheck.eigen_samples": 100,
    "detcheck.eigen_L": 6,
    # kernel-norms
    "kernel.grid.X": 1000.0,
    "kernel.grid.h": 0.05,
    "kernel.grid.grade_from": 4.0,
    "kernel.energies": 5,
    "kernel.sites": [1, 2, 3],
    "kernel.k_max": 20.0,
    "kernel.dk": 1e-3,
    "kernel.g1_plateau": 1.0,
    "kernel.g1_support": 2.0,
    "kernel.product.C": 1.0,
    "kernel.product.zeta": 0.25,
    "kernel.product.s_max": 20,
    "kernel.suite": True,
    "kernel.hs": True,
    # perturb
    "perturb.eps": 0.01,
    "perturb.scale": 0.005,
    # chain-check
    "chain.L": [1, 2],
    "chain.m": [1, 1],
    "chain.samples": 10_000,
    "chain.panels": 40,
    "chain.grid.X": 200.0,
    "chain.grid.h": 0.1,
    "chain.grid.grade_from": 2.0,
}


def flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _check_types(flat: dict) -> None:
    for key, value in flat.items():
        default = DEFAULTS[key]
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif isinstance(default, str):
            ok = isinstance(value, str)
        else:
            ok = isinstance(value, list)
        if not ok:
            raise ConfigError(f"key {key!r}: expected {type(default).__name__}, got {value!r}")


def _sequence(flat: dict, prefix: str) -> SequenceSpec:
    g = lambda k: flat[f"{prefix}.{k}"]  # noqa: E731
    kind = g("kind")
    if kind == "constant":
        return SequenceSpec.constant(g("value"))
    if kind == "periodic":
        return SequenceSpec.periodic(g("values"))
    if kind == "list":
        return SequenceSpec.explicit(g("values"), g("start"), g("fill"))
    if kind == "power":
        return SequenceSpec.power(g("C"), g("zeta"))
    raise ConfigError(f"key {prefix + '.kind'!r}: unknown sequence kind {kind!r}")


def _density(flat: dict) -> SingleSiteDensity:
    g = lambda k: flat[f"model.density.{k}"]  # noqa: E731
    kind = g("kind")
    if kind == "piecewise":
        return SingleSiteDensity.piecewise(g("breaks"), g("heights"))
    builders = {"uniform": SingleSiteDensity.uniform, "triangular": SingleSiteDensity.triangular,
                "bump": SingleSiteDensity.bump}
    if kind not in builders:
        raise ConfigError(f"key 'model.density.kind': unknown density kind {kind!r}")
    return builders[kind](g("lo"), g("hi"))


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings of one run: the model plus per-subcommand parameters."""

    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def from_mapping(cls, tree: dict) -> "ExperimentConfig":
        flat = flatten(tree)
        unknown = sorted(set(flat) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        _check_types(flat)
        merged = dict(DEFAULTS)
        merged.update(flat)
        cfg = cls(merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """Read a TOML config, or the ``config`` block of a run manifest (``.json``)."""
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if path.suffix == ".json":
            try:
                tree = json.loads(raw)["config"]
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"{path} is not a run manifest") from exc
        else:
            try:
                tree = tomllib.loads(raw.decode())
            except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_mapping(tree)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.replace(**{"model.master_seed": int(seed)})

    def replace(self, **changes) -> "ExperimentConfig":
        vals = dict(self.values)
        for k, v in changes.items():
            if k not in DEFAULTS:
                raise ConfigError(f"unknown config key {k!r}")
            vals[k] = v
        cfg = ExperimentConfig(vals)
        cfg.validate()
        return cfg

    # --- derived objects ---------------------------------------------------

    def model(self) -> ModelConfig:
        try:
            return ModelConfig(
                density=_density(self.values),
                a_spec=_sequence(self.values, "model.a"),
                c_spec=_sequence(self.values, "model.c"),
                d_spec=_sequence(self.values, "model.d"),
                L=self["model.L"],
                master_seed=self["model.master_seed"],
                samples=self["model.samples"],
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def m_values(self) -> list[int]:
        return list(range(self["decay.m_min"], self["decay.m_max"] + 1))

    def chain_cases(self) -> list[tuple[int, int]]:
        return list(zip(self["chain.L"], self["chain.m"]))

    def validate(self) -> None:
        model = self.model()
        L = model.L
        if not -L <= self["decay.m_min"] <= self["decay.m_max"] <= L:
            raise ConfigError(f"decay m-range [{self['decay.m_min']}, {self['decay.m_max']}] must lie in [-{L}, {L}]")
        if any(n not in (0, 1) for n in self["decay.n_ref"]) or not self["decay.n_ref"]:
            raise ConfigError("key 'decay.n_ref': entries must be 0 or 1")
        if self["decay.fit_kind"] not in ("exponential", "stretched"):
            raise ConfigError(f"key 'decay.fit_kind': unknown fit kind {self['decay.fit_kind']!r}")
        if len(self["chain.L"]) != len(self["chain.m"]):
            raise ConfigError("keys 'chain.L' and 'chain.m' must have equal length")
        for cl, cm in self.chain_cases():
            if cl not in (1, 2) or not 1 <= cm <= cl:
                raise ConfigError(f"chain case (L={cl}, m={cm}) needs L in {{1, 2}} and 1 <= m <= L")
        if any(s < 1 for s in self["kernel.sites"]):
            raise ConfigError("key 'kernel.sites': sites must be >= 1")
        for key in ("perturb.eps", "kernel.grid.X", "kernel.grid.h", "chain.grid.X", "chain.grid.h", "detcheck.h"):
            if not self[key] > 0:
                raise ConfigError(f"key {key!r} must be positive")

    def to_tree(self) -> dict:
        """Nested dict with every key (defaults included), for manifests."""
        tree: dict = {}
        for key in sorted(self.values):
            node = tree
            *parents, leaf = key.split(".")
            for p in parents:
                node = node.setdefault(p, {})
            node[leaf] = self.values[key]
        return tree
