"""Experiment configuration: an INI file with one section per module.

Every key has a typed default in :data:`SCHEMA`.  Values are resolved in
order default < config file < command line, then validated before any work
starts.  List-valued keys are comma separated; ``a:b:step`` expands to an
inclusive integer range, so ``r_age = 10:100:10`` means 10, 20, ..., 100.

Example::

    [run]
    seed = 7

    [index]
    k = 10
    L = 15
    policy = smooth:0.95

    [eval]
    policies = threshold:auto, bucket:auto, smooth:0.95
    r_sim = 0.9
    r_age = 10:100:10
"""

from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any

from .analysis import PRESETS, RadiusParams
from .dynapop import DynaPopConfig
from .errors import ValidationError
from .policies import parse_policy
from .synth import GeneratorSpec

SCHEMA: dict[str, dict[str, Any]] = {
    "run": {"seed": 0, "out": "out"},
    "corpus": {"path": "", "interest": "", "follower_norm": 0},
    "generate": {name: value for name, value in GeneratorSpec().to_dict().items()},
    "index": {"k": 10, "L": 15, "policy": "smooth:0.95", "hash_seed": -1, "evicted_cache": 10_000},
    "dynapop": {"enabled": False, "u": 0.95, "alpha": 0.95, "synthesize": False,
                "query_probability": 0.01, "top_n": 10, "stream_fraction": 0.75},
    "eval": {"policies": "threshold:auto, bucket:auto, smooth:0.95", "train_fraction": 0.975,
             "sample_size": 1000, "capacity_tol": 0.10,
             "r_sim": "0.9", "r_age": "10:100:10", "r_quality": "0", "r_pop": ""},
    "query": {"snapshot": "", "text": "", "vector": "", "r_sim": "0.8", "r_age": "1000000",
              "r_quality": "0", "r_pop": "", "limit": 0},
    "analyze": {"preset": "", "function": "", "grid": "", "fixed": "", "k": 10, "L": 15, "p": 0.95},
}


def _coerce(section: str, key: str, raw: Any) -> Any:
    default = SCHEMA[section][key]
    if type(raw) is type(default):
        return raw
    if type(default) is float and type(raw) is int:
        return float(raw)
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        kind = type(default).__name__
        raise ValidationError(f"[{section}] {key}: expected {kind}, got {text!r}") from None
    return text


def parse_list(text: str, kind=float) -> list:
    """Comma-separated values; ``a:b:step`` items expand to inclusive integer ranges."""
    out = []
    for part in (p.strip() for p in str(text).split(",")):
        if not part:
            continue
        try:
            if ":" in part:
                bits = [int(b) for b in part.split(":")]
                if len(bits) not in (2, 3) or (len(bits) == 3 and bits[2] <= 0):
                    raise ValueError(part)
                lo, hi = bits[0], bits[1]
                step = bits[2] if len(bits) == 3 else 1
                out.extend(kind(v) for v in range(lo, hi + 1, step))
            else:
                out.append(kind(part))
        except ValueError:
            raise ValidationError(f"bad list element {part!r}") from None
    return out


class ExperimentConfig:
    """Resolved, typed configuration shared by every CLI command."""

    def __init__(self, values: dict[str, dict[str, Any]] | None = None):
        self.values = {s: dict(keys) for s, keys in SCHEMA.items()}
        for section, keys in (values or {}).items():
            for key, raw in keys.items():
                self.set(section, key, raw)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict[str, dict[str, Any]] | None = None
             ) -> "ExperimentConfig":
        cfg = cls()
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            parser.optionxform = str
            with open(path, encoding="utf-8") as fh:
                try:
                    parser.read_file(fh)
                except configparser.Error as exc:
                    raise ValidationError(f"{path}: {exc}") from exc
            for section in parser.sections():
                for key, raw in parser.items(section):
                    cfg.set(section, key, raw)
        for section, keys in (overrides or {}).items():
            for key, raw in keys.items():
                cfg.set(section, key, raw)
        return cfg

    def set(self, section: str, key: str, raw: Any) -> None:
        if section not in SCHEMA:
            raise ValidationError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ValidationError(f"unknown key {key!r} in [{section}]")
        self.values[section][key] = _coerce(section, key, raw)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    def to_dict(self) -> dict:
        return {s: dict(sorted(k.items())) for s, k in sorted(self.values.items())}

    def write(self, path: str | Path) -> None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section, keys in self.to_dict().items():
            parser[section] = {k: str(v) for k, v in keys.items()}
        with open(path, "w", encoding="utf-8") as fh:
            parser.write(fh)

    # -- typed views -----------------------------------------------------

    @property
    def seed(self) -> int:
        return self["run"]["seed"]

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(**self["generate"])

    def hash_seed(self) -> int | None:
        hs = self["index"]["hash_seed"]
        return None if hs < 0 else hs

    def dynapop(self) -> DynaPopConfig | None:
        d = self["dynapop"]
        return DynaPopConfig(u=d["u"], alpha=d["alpha"]) if d["enabled"] else None

    def follower_norm(self) -> int | None:
        n = self["corpus"]["follower_norm"]
        return n if n > 0 else None

    def radii(self, section: str) -> list[RadiusParams]:
        s = self[section]
        sims = parse_list(s["r_sim"])
        ages = parse_list(s["r_age"], int)
        quals = parse_list(s["r_quality"])
        pops: list = parse_list(s["r_pop"]) or [None]
        if not sims or not ages or not quals:
            raise ValidationError(f"[{section}] radii grid is empty")
        return [RadiusParams(r_sim, r_age, r_q, r_pop)
                for r_pop in pops for r_q in quals for r_sim in sims for r_age in ages]

    def policy_specs(self) -> list[tuple[str, str]]:
        """``(label, spec)`` pairs for ``[eval] policies``; the size may be ``auto``."""
        out = []
        for part in (p.strip() for p in self["eval"]["policies"].split(",")):
            if not part:
                continue
            kind, _, value = part.partition(":")
            kind = kind.lower()
            label = kind if kind not in (l for l, _ in out) else f"{kind}-{len(out)}"
            if value != "auto":
                parse_policy(part)
            elif kind not in ("threshold", "bucket"):
                raise ValidationError(f"only threshold and bucket sizes can be 'auto', got {part!r}")
            out.append((label, part))
        if not out:
            raise ValidationError("[eval] policies is empty")
        return out

    def validate(self, command: str) -> None:
        """Check every value the command will use before it starts."""
        idx = self["index"]
        if not 1 <= idx["k"] <= 62 or idx["L"] < 1:
            raise ValidationError("[index] needs 1 <= k <= 62 and L >= 1")
        if idx["evicted_cache"] < 0:
            raise ValidationError("[index] evicted_cache must be non-negative")
        if self.seed < 0:
            raise ValidationError("[run] seed must be non-negative")
        self.dynapop()
        if command == "generate":
            self.generator_spec()
        if command == "run":
            parse_policy(idx["policy"])
        if command == "eval":
            self.policy_specs()
            self.radii("eval")
            e = self["eval"]
            if not 0.0 < e["train_fraction"] < 1.0 or e["sample_size"] < 1 or e["capacity_tol"] < 0:
                raise ValidationError("[eval] needs 0 < train_fraction < 1, sample_size >= 1, capacity_tol >= 0")
            d = self["dynapop"]
            if d["synthesize"] and not (0.0 <= d["query_probability"] <= 1.0 and d["top_n"] >= 1):
                raise ValidationError("[dynapop] needs query_probability in [0, 1] and top_n >= 1")
            if any(r.r_pop is not None for r in self.radii("eval")) and not d["enabled"]:
                raise ValidationError("a popularity radius needs [dynapop] enabled = true")
        if command == "query":
            self.radii("query")
            q = self["query"]
            if bool(q["text"]) == bool(q["vector"]):
                raise ValidationError("give exactly one of query text or query vector")
        if command == "analyze":
            a = self["analyze"]
            if bool(a["preset"]) == bool(a["function"]):
                raise ValidationError("give exactly one of an analysis preset or a function")
            if a["preset"] and a["preset"] not in PRESETS:
                raise ValidationError(f"unknown preset {a['preset']!r}; choose from {', '.join(PRESETS)}")


def parse_assignments(text: str) -> dict[str, list[float]]:
    """``"s=0.7,0.8; a=0:60"`` -> ``{"s": [0.7, 0.8], "a": [0, ..., 60]}``."""
    out: dict[str, list[float]] = {}
    for part in (p.strip() for p in text.split(";")):
        if not part:
            continue
        name, eq, values = part.partition("=")
        if not eq or not name.strip():
            raise ValidationError(f"expected name=values, got {part!r}")
        out[name.strip()] = parse_list(values)
    return out
