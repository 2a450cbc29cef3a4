"""Communication weights psi(r) and their random-parameter variants psi(r, theta)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

FAMILIES = ("constant", "inverse-power", "tabulated")
_FAMILY_CODE = {"constant": 0, "inverse-power": 1, "tabulated": 2}


@dataclass(frozen=True)
class KernelSpec:
    """Communication weight with coupling strength and declared bounds.

    ``constant``       psi(r, theta) = level + level_slope * theta
    ``inverse-power``  psi(r, theta) = (1 + r^2) ** -(gamma_base + gamma_slope * theta)
    ``tabulated``      linear interpolation through (knots_r, knots_psi), clamped
                       to the end values outside the knot range

    A kernel is stochastic when its value depends on theta, i.e. when the
    relevant slope is nonzero.
    """

    family: str = "constant"
    kappa: float = 1.0
    psi0: float = 1.0
    psiM: float = 1.0
    lip: float = 1.0
    gamma_base: float = 0.1
    gamma_slope: float = 0.0
    level: float = 1.0
    level_slope: float = 0.0
    knots_r: tuple = field(default=())
    knots_psi: tuple = field(default=())

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        if self.kappa < 0:
            raise ConfigurationError("kappa must be nonnegative")
        if not (self.psi0 > 0 and self.psiM > 0):
            raise ConfigurationError("psi0 and psiM must be positive")
        if self.lip < 0:
            raise ConfigurationError("lip must be nonnegative")
        if self.family == "tabulated":
            r = np.asarray(self.knots_r, dtype=float)
            if r.ndim != 1 or r.size < 2 or r.size != len(self.knots_psi):
                raise ConfigurationError("tabulated kernel needs >= 2 matching knots")
            if np.any(np.diff(r) <= 0) or r[0] < 0:
                raise ConfigurationError("knots_r must be increasing and nonnegative")
            object.__setattr__(self, "knots_r", tuple(float(v) for v in r))
            object.__setattr__(self, "knots_psi", tuple(float(v) for v in self.knots_psi))

    @property
    def is_stochastic(self) -> bool:
        if self.family == "constant":
            return self.level_slope != 0.0
        if self.family == "inverse-power":
            return self.gamma_slope != 0.0
        return False

    def gamma(self, theta=0.0):
        return self.gamma_base + self.gamma_slope * theta

    def kernel_args(self, theta=None):
        """Flat arguments for the compiled/numpy pair kernels at a fixed theta."""
        if self.is_stochastic and theta is None:
            raise ConfigurationError("stochastic kernel evaluated without theta")
        th = 0.0 if theta is None else float(theta)
        knots_r = np.asarray(self.knots_r or (0.0, 1.0), dtype=np.float64)
        knots_psi = np.asarray(self.knots_psi or (0.0, 0.0), dtype=np.float64)
        return (
            _FAMILY_CODE[self.family],
            self.level + self.level_slope * th,
            self.gamma(th),
            knots_r,
            knots_psi,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        d = dict(d)
        for key in ("knots_r", "knots_psi"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown kernel keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["knots_r"] = list(self.knots_r)
        out["knots_psi"] = list(self.knots_psi)
        return out


def psi(spec: KernelSpec, r, theta=None):
    """Vectorised kernel evaluation; ``r`` and ``theta`` broadcast together."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise DomainError("psi is defined for r >= 0 only")
    if spec.is_stochastic and theta is None:
        raise ConfigurationError("stochastic kernel requires theta")
    th = 0.0 if theta is None else np.asarray(theta, dtype=np.float64)
    if spec.family == "constant":
        return np.broadcast_to(spec.level + spec.level_slope * th, np.broadcast(r, th).shape).astype(np.float64)
    if spec.family == "inverse-power":
        return np.power(1.0 + r * r, -spec.gamma(th))
    out = np.interp(r, spec.knots_r, spec.knots_psi)
    return np.broadcast_to(out, np.broadcast(r, th).shape).astype(np.float64)


def eval_psi(spec: KernelSpec, r: float, theta: float | None = None) -> float:
    """Scalar psi(r) or psi(r, theta)."""
    if r < 0:
        raise DomainError(f"negative distance r={r}")
    return float(psi(spec, r, theta))


@dataclass
class Violation:
    kind: str  # "lower-bound", "upper-bound", "monotonicity" or "lipschitz"
    r: tuple
    theta: float | None
    detail: str


@dataclass
class KernelReport:
    n_samples: int
    r_max: float
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations


def validate_kernel(
    spec: KernelSpec,
    n_samples: int,
    r_max: float,
    rng_seed: int,
    theta_range=(-1.0, 1.0),
    max_reports: int = 20,
    rtol: float = 1e-12,
) -> KernelReport:
    """Check the bounds and monotonicity of psi on sampled points, along with its Lipschitz constant.

    Only [0, r_max] is probed. Both end points are always included, so the
    lower bound is tested where a decreasing kernel is smallest.
    """
    if n_samples < 2:
        raise ConfigurationError("n_samples must be >= 2")
    rng = np.random.default_rng(rng_seed)
    r = np.concatenate([[0.0, r_max], rng.uniform(0.0, r_max, n_samples - 2)])
    if spec.is_stochastic:
        lo, hi = theta_range
        thetas = np.concatenate([[lo, hi], rng.uniform(lo, hi, 3)])
    else:
        thetas = [None]
    violations: list[Violation] = []

    def report(kind, rr, th, detail):
        if len(violations) < max_reports:
            violations.append(Violation(kind, rr, None if th is None else float(th), detail))

    for th in thetas:
        vals = psi(spec, r, th)
        for idx in np.flatnonzero(vals < spec.psi0 * (1 - rtol)):
            report("lower-bound", (float(r[idx]),), th, f"psi={vals[idx]:.6g} < psi0={spec.psi0}")
        for idx in np.flatnonzero(vals > spec.psiM * (1 + rtol)):
            report("upper-bound", (float(r[idx]),), th, f"psi={vals[idx]:.6g} > psiM={spec.psiM}")
        # sorted neighbours plus one random pairing of the samples
        order = np.argsort(r, kind="stable")
        perm = rng.permutation(r.size)
        i1 = np.concatenate([order[:-1], np.arange(r.size)])
        i2 = np.concatenate([order[1:], perm])
        r1, r2 = r[i1], r[i2]
        v1, v2 = vals[i1], vals[i2]
        dv = v1 - v2
        dr = r1 - r2
        for idx in np.flatnonzero(dv * dr > rtol * np.abs(dr)):
            report(
                "monotonicity",
                (float(r1[idx]), float(r2[idx])),
                th,
                f"psi increases from {min(v1[idx], v2[idx]):.6g} to {max(v1[idx], v2[idx]):.6g}",
            )
        for idx in np.flatnonzero(np.abs(dv) > spec.lip * np.abs(dr) + rtol):
            report(
                "lipschitz",
                (float(r1[idx]), float(r2[idx])),
                th,
                f"|dpsi|={abs(dv[idx]):.6g} > lip*|dr|={spec.lip * abs(dr[idx]):.6g}",
            )
    return KernelReport(n_samples=n_samples, r_max=r_max, violations=violations)
