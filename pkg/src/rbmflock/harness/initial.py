"""Samplers for the initial distributions used in the experiments."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..particles import Ensemble

FAMILIES = ("bimodal1d_v", "bivariate_bimodal", "annulus2d", "point_mass", "custom_gaussian")

_DEFAULTS = {
    # velocity-only bimodal data of the homogeneous test; positions sit at 0
    "bimodal1d_v": {"mu": 0.5, "sigma2": 0.1},
    # x ~ N(0, sigma_x2), v ~ equal mixture of N(+-mu_v, sigma_v2)
    "bivariate_bimodal": {"sigma_x2": 0.5, "sigma_v2": 0.2, "mu_v": 1.0},
    "annulus2d": {"r_inner": 0.5, "r_outer": 1.0},
    "point_mass": {"x0": 0.0, "v0": 0.0},
    "custom_gaussian": {"mean_x": 0.0, "mean_v": 0.0, "var_x": 1.0, "var_v": 1.0},
}

_DIMS = {"bimodal1d_v": (1,), "bivariate_bimodal": (1,), "annulus2d": (2,)}


@dataclass
class InitialDistribution:
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown initial family {self.family!r}; expected one of {FAMILIES}")
        unknown = set(self.params) - set(_DEFAULTS[self.family])
        if unknown:
            raise ConfigurationError(f"unknown parameters for {self.family}: {sorted(unknown)}")
        self.params = {**_DEFAULTS[self.family], **self.params}

    def check_dim(self, dim: int):
        allowed = _DIMS.get(self.family)
        if allowed is not None and dim not in allowed:
            raise ConfigurationError(f"{self.family} is defined for dim in {allowed}, got {dim}")
        if dim < 1:
            raise ConfigurationError("dim must be positive")

    def velocity_moments(self):
        """Mean and per-component variance of the velocity marginal, where known in closed form."""
        q = self.params
        if self.family == "bimodal1d_v":
            return 0.0, q["sigma2"] + q["mu"] ** 2
        if self.family == "bivariate_bimodal":
            return 0.0, q["sigma_v2"] + q["mu_v"] ** 2
        if self.family == "custom_gaussian":
            return q["mean_v"], q["var_v"]
        if self.family == "point_mass":
            return q["v0"], 0.0
        raise ConfigurationError(f"no closed-form velocity moments for {self.family}")

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], dict(d.get("params", {})))


def initial_rng(seed, *stream):
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0x1A17, *map(int, stream)]))


def _mixture(rng, n, dim, mu, sigma2):
    signs = rng.choice(np.array([-1.0, 1.0]), size=(n, 1))
    return mu * signs + np.sqrt(sigma2) * rng.standard_normal((n, dim))


def sample_initial(dist: InitialDistribution, n: int, dim: int, seed: int, stream=()) -> Ensemble:
    """n i.i.d. draws from ``dist`` in ``dim`` space dimensions."""
    dist.check_dim(dim)
    if n < 1:
        raise ConfigurationError("need at least one particle")
    rng = initial_rng(seed, *stream)
    q = dist.params
    if dist.family == "bimodal1d_v":
        x = np.zeros((n, dim))
        v = _mixture(rng, n, dim, q["mu"], q["sigma2"])
    elif dist.family == "bivariate_bimodal":
        x = np.sqrt(q["sigma_x2"]) * rng.standard_normal((n, dim))
        v = _mixture(rng, n, dim, q["mu_v"], q["sigma_v2"])
    elif dist.family == "annulus2d":
        r0, r1 = q["r_inner"], q["r_outer"]
        if not 0 < r0 < r1:
            raise ConfigurationError("annulus needs 0 < r_inner < r_outer")
        # area-uniform radius: r^2 uniform on [r0^2, r1^2]
        r = np.sqrt(rng.uniform(r0 * r0, r1 * r1, n))
        phi = rng.uniform(0.0, 2.0 * np.pi, n)
        x = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
        # unit tangential velocity k ^ x / |x|, counterclockwise
        norm = np.hypot(x[:, 0], x[:, 1])
        v = np.column_stack([-x[:, 1], x[:, 0]]) / norm[:, None]
    elif dist.family == "point_mass":
        x = np.broadcast_to(np.asarray(q["x0"], dtype=float), (n, dim)).copy()
        v = np.broadcast_to(np.asarray(q["v0"], dtype=float), (n, dim)).copy()
    else:
        x = np.asarray(q["mean_x"], dtype=float) + np.sqrt(q["var_x"]) * rng.standard_normal((n, dim))
        v = np.asarray(q["mean_v"], dtype=float) + np.sqrt(q["var_v"]) * rng.standard_normal((n, dim))
    return Ensemble(x, v)
