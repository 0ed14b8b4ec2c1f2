"""JSON run reports.

A report is a plain nested ``dict`` wrapped by :class:`RunReport`; every
float that could be NaN is stored as ``null`` so the output is strict JSON.
Interval levels are keyed by ``repr(alpha)`` (``"0.05"``), which round-trips
through ``float``.
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numba
import numpy as np

from . import __version__
from .dpdu import DetectionResult
from .inference import InferenceResult
from .refine import RefinedChangePoints
from .simulate import RNG_ALGORITHM
from .tuning import CvResult

SCHEMA_VERSION = "1.0"
TIMING_KEYS = ("timings",)


def versions() -> dict[str, str]:
    return {
        "regime_shift": __version__,
        "numpy": np.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def _num(x: float | None) -> float | None:
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def alpha_key(alpha: float) -> str:
    return repr(float(alpha))


def detection_dict(det: DetectionResult) -> dict[str, Any]:
    cfg = det.config
    return {
        "change_points": list(det.change_points),
        "k_hat": det.k_hat,
        "objective": _num(det.objective),
        "segment_betas": [b.tolist() for b in det.segment_betas],
        "nonconverged_fits": det.nonconverged,
        "lambda": cfg.lam if cfg else None,
        "zeta": cfg.zeta if cfg else None,
    }


def refinement_dict(ref: RefinedChangePoints) -> dict[str, Any]:
    return {"eta_tilde": list(ref.eta_tilde)}


def inference_dict(res: InferenceResult, seed: int) -> dict[str, Any]:
    return {
        "k": res.k,
        "eta_tilde": res.eta_tilde,
        "kappa_hat": _num(res.kappa_hat),
        "sigma2_hat": _num(res.sigma2_hat),
        "varpi_hat": _num(res.varpi_hat),
        "R": res.R,
        "seed": {"seed": seed, "spawn_key": list(res.seed_key), "rng": RNG_ALGORITHM},
        "intervals": {alpha_key(a): list(iv) for a, iv in res.intervals.items()},
        "quantiles": {alpha_key(a): [_num(q) for q in qs] for a, qs in res.quantiles.items()},
    }


def cv_dict(cv: CvResult) -> dict[str, Any]:
    return {
        "lambda": cv.lam,
        "zeta": cv.zeta,
        "table": [{**row, "loss": _num(row["loss"])} for row in cv.table()],
    }


@dataclass
class RunReport:
    """Everything one CLI invocation produced, with enough echo to rerun it."""

    command: str
    config: dict[str, Any]
    detection: dict[str, Any] | None = None
    refinement: dict[str, Any] | None = None
    inference: list[dict[str, Any]] | None = None
    cv: dict[str, Any] | None = None
    extra: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION
    rng: str = RNG_ALGORITHM
    versions: dict[str, str] = field(default_factory=versions)

    def to_dict(self, timings: bool = True) -> dict[str, Any]:
        d = {"schema_version": self.schema_version}
        d.update({k: v for k, v in asdict(self).items() if k != "schema_version"})
        if not timings:
            for k in TIMING_KEYS:
                d.pop(k, None)
        return d

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunReport":
        if "schema_version" not in d:
            raise ValueError("not a run report: missing schema_version")
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def load(cls, path: str | Path) -> "RunReport":
        path = Path(path)
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except OSError as exc:
            raise ValueError(f"cannot read report {path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())
