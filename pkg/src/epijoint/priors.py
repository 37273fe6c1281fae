"""Prior distributions for free model parameters."""
from __future__ import annotations

from dataclasses import dataclass
import math

from scipy import special


@dataclass(frozen=True)
class Prior:
    """A univariate prior.

    ``dist`` is one of ``uniform(a, b)``, ``beta(a, b)``, ``gamma(shape, rate)``,
    ``lognormal(mu, sigma)``, ``normal(mu, sigma)`` or ``fixed`` (point mass at
    ``value``; the parameter is not sampled).
    """

    dist: str
    a: float = 0.0
    b: float = 1.0
    value: float | None = None

    _HYPER = {
        "uniform": ("a", "b"),
        "beta": ("a", "b"),
        "gamma": ("shape", "rate"),
        "lognormal": ("mu", "sigma"),
        "normal": ("mu", "sigma"),
        "fixed": ("value",),
    }

    def __post_init__(self):
        if self.dist not in self._HYPER:
            raise ValueError(f"unknown prior family {self.dist!r}")
        if self.dist == "uniform" and not self.a < self.b:
            raise ValueError("uniform prior needs a < b")
        if self.dist in ("beta", "gamma") and not (self.a > 0 and self.b > 0):
            raise ValueError(f"{self.dist} prior needs positive hyperparameters")
        if self.dist in ("lognormal", "normal") and not self.b > 0:
            raise ValueError(f"{self.dist} prior needs sigma > 0")

    @property
    def is_fixed(self) -> bool:
        return self.dist == "fixed"

    @classmethod
    def from_dict(cls, d: dict) -> "Prior":
        d = dict(d)
        dist = d.pop("dist", None)
        if dist is None:
            raise ValueError("prior needs a 'dist' key")
        dist = str(dist).lower()
        names = cls._HYPER.get(dist)
        if names is None:
            raise ValueError(f"unknown prior family {dist!r}")
        unknown = set(d) - set(names)
        if unknown:
            raise ValueError(f"unknown keys {sorted(unknown)} for {dist} prior")
        if dist == "fixed":
            return cls("fixed", value=None if "value" not in d else float(d["value"]))
        missing = [n for n in names if n not in d]
        if missing:
            raise ValueError(f"{dist} prior missing {missing}")
        return cls(dist, float(d[names[0]]), float(d[names[1]]))

    def to_dict(self) -> dict:
        if self.is_fixed:
            return {"dist": "fixed"} if self.value is None else {"dist": "fixed", "value": self.value}
        n0, n1 = self._HYPER[self.dist]
        return {"dist": self.dist, n0: self.a, n1: self.b}

    def logpdf(self, x: float) -> float:
        a, b = self.a, self.b
        if self.dist == "uniform":
            return -math.log(b - a) if a <= x <= b else -math.inf
        if self.dist == "beta":
            if not 0.0 < x < 1.0:
                return -math.inf
            return ((a - 1) * math.log(x) + (b - 1) * math.log1p(-x)
                    - special.betaln(a, b))
        if self.dist == "gamma":
            if not x > 0.0:
                return -math.inf
            return a * math.log(b) - special.gammaln(a) + (a - 1) * math.log(x) - b * x
        if self.dist == "lognormal":
            if not x > 0.0:
                return -math.inf
            z = (math.log(x) - a) / b
            return -0.5 * z * z - math.log(x * b) - 0.5 * math.log(2 * math.pi)
        if self.dist == "normal":
            z = (x - a) / b
            return -0.5 * z * z - math.log(b) - 0.5 * math.log(2 * math.pi)
        return 0.0
