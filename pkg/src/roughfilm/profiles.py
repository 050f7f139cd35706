"""Periodic surface profiles and film geometries.

A profile is a scalar function on the plane, periodic with respect to the
unit square Q.  All evaluation routines accept arrays of points with a
trailing axis of length 2 and broadcast over the leading axes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import optimize

KINDS = ("constant", "sine2_1d", "sine2_2d", "sampled")

# sample used to verify f1 < f2 on a film geometry
ORDERING_SAMPLES = 256


class GeometryError(ValueError):
    """Raised when a profile pair does not describe a valid film."""


def _bspline_weights(t):
    """Cubic B-spline weights and derivatives for offsets ``t`` in [0, 1)."""
    t2 = t * t
    t3 = t2 * t
    w = np.stack([
        (1 - t) ** 3 / 6,
        (3 * t3 - 6 * t2 + 4) / 6,
        (-3 * t3 + 3 * t2 + 3 * t + 1) / 6,
        t3 / 6,
    ])
    dw = np.stack([
        -0.5 * (1 - t) ** 2,
        1.5 * t2 - 2 * t,
        -1.5 * t2 + t + 0.5,
        0.5 * t2,
    ])
    return w, dw


def _periodic_spline_coefficients(values):
    """Prefilter grid samples into periodic cubic B-spline coefficients."""
    n1, n2 = values.shape
    k1 = np.arange(n1)
    k2 = np.arange(n2)
    b1 = (4 + 2 * np.cos(2 * np.pi * k1 / n1)) / 6
    b2 = (4 + 2 * np.cos(2 * np.pi * k2 / n2)) / 6
    spec = np.fft.fft2(values) / np.outer(b1, b2)
    return np.fft.ifft2(spec).real


@dataclass(frozen=True, eq=False)
class Profile:
    """A Q-periodic surface profile ``offset + amplitude * base(x)``.

    ``kind`` selects the base shape: ``constant`` (the base is ``value``),
    ``sine2_1d`` (sin^2(pi x1)), ``sine2_2d`` (sin^2(pi x1) sin^2(pi x2)) or
    ``sampled``.  Sampled profiles carry an N1 x N2 ``grid`` of values at the
    nodes ``(i/N1, j/N2)``, with the first index running along x1, and are
    interpolated by a periodic bicubic spline.
    """

    kind: str
    value: float = 0.0
    grid: np.ndarray | None = field(default=None, repr=False)
    amplitude: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "sampled":
            if self.grid is None:
                raise ValueError("sampled profile requires a grid")
            grid = np.array(self.grid, dtype=float)
            if grid.ndim != 2 or min(grid.shape) < 4:
                raise ValueError("sampled grid must be a 2D array with at least 4 points per axis")
            if not np.all(np.isfinite(grid)):
                raise ValueError("sampled grid contains non-finite values")
            grid.setflags(write=False)
            object.__setattr__(self, "grid", grid)

    # constructors

    @classmethod
    def constant(cls, c: float) -> "Profile":
        return cls("constant", value=float(c))

    @classmethod
    def sine2_1d(cls) -> "Profile":
        return cls("sine2_1d")

    @classmethod
    def sine2_2d(cls) -> "Profile":
        return cls("sine2_2d")

    @classmethod
    def sampled(cls, grid) -> "Profile":
        return cls("sampled", grid=np.asarray(grid, dtype=float))

    @classmethod
    def from_csv(cls, path) -> "Profile":
        """Read a sampled profile from a CSV file of comma separated rows."""
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        return cls.sampled(np.array(rows))

    def shifted(self, a: float) -> "Profile":
        """Return the profile ``f + a``."""
        return Profile(self.kind, self.value, self.grid, self.amplitude, self.offset + a)

    def scaled(self, s: float) -> "Profile":
        """Return the profile ``s * f``."""
        return Profile(self.kind, self.value, self.grid, self.amplitude * s, self.offset * s)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.amplitude == 0.0

    # evaluation

    def _base(self, x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        x2 = x[..., 1]
        if self.kind == "constant":
            return np.full(x1.shape, self.value), np.zeros(x.shape)
        if self.kind == "sine2_1d":
            s = np.sin(np.pi * x1)
            val = s * s
            g = np.zeros(x.shape)
            g[..., 0] = np.pi * np.sin(2 * np.pi * x1)
            return val, g
        if self.kind == "sine2_2d":
            s1 = np.sin(np.pi * x1) ** 2
            s2 = np.sin(np.pi * x2) ** 2
            g = np.empty(x.shape)
            g[..., 0] = np.pi * np.sin(2 * np.pi * x1) * s2
            g[..., 1] = np.pi * np.sin(2 * np.pi * x2) * s1
            return s1 * s2, g
        return self._spline(x1, x2)

    @cached_property
    def _coefficients(self):
        return _periodic_spline_coefficients(self.grid)

    def _spline(self, x1, x2):
        c = self._coefficients
        n1, n2 = c.shape
        u1 = np.mod(x1, 1.0) * n1
        u2 = np.mod(x2, 1.0) * n2
        i1 = np.floor(u1)
        i2 = np.floor(u2)
        w1, dw1 = _bspline_weights(u1 - i1)
        w2, dw2 = _bspline_weights(u2 - i2)
        i1 = i1.astype(np.int64)
        i2 = i2.astype(np.int64)
        val = np.zeros(x1.shape)
        d1 = np.zeros(x1.shape)
        d2 = np.zeros(x1.shape)
        for a in range(4):
            ra = (i1 + a - 1) % n1
            for b in range(4):
                cb = c[ra, (i2 + b - 1) % n2]
                val += w1[a] * w2[b] * cb
                d1 += dw1[a] * w2[b] * cb
                d2 += w1[a] * dw2[b] * cb
        g = np.stack([d1 * n1, d2 * n2], axis=-1)
        return val, g

    def __call__(self, x):
        """Evaluate the profile at points ``x`` (shape ``(..., 2)``)."""
        val, _ = self._base(x)
        return self.offset + self.amplitude * val

    def grad(self, x):
        """Gradient of the profile, shape ``(..., 2)``."""
        _, g = self._base(x)
        return self.amplitude * g

    def value_and_grad(self, x):
        val, g = self._base(x)
        return self.offset + self.amplitude * val, self.amplitude * g

    def normal(self, x):
        """The unnormalized upward normal ``(-grad f, 1)``, shape ``(..., 3)``."""
        g = self.grad(x)
        n = np.empty(g.shape[:-1] + (3,))
        n[..., :2] = -g
        n[..., 2] = 1.0
        return n

    # metadata

    @cached_property
    def lipschitz_bound(self) -> float:
        """Upper bound on ``|grad f|``."""
        if self.is_constant:
            return 0.0
        if self.kind == "sine2_1d":
            return float(np.pi * abs(self.amplitude))
        if self.kind == "sine2_2d":
            return float(_sine2_2d_max_slope() * abs(self.amplitude))
        g = self.grid
        n1, n2 = g.shape
        s1 = np.abs(np.roll(g, -1, axis=0) - g) * n1
        s2 = np.abs(np.roll(g, -1, axis=1) - g) * n2
        return float(1.1 * abs(self.amplitude) * np.hypot(s1, s2).max())

    @cached_property
    def range(self) -> tuple[float, float]:
        """Bounds ``(min, max)`` of the profile over Q."""
        if self.kind == "constant":
            lo = hi = self.value
        elif self.kind in ("sine2_1d", "sine2_2d"):
            lo, hi = 0.0, 1.0
        else:
            # the spline may overshoot the samples slightly between nodes
            n1, n2 = self.grid.shape
            t = np.stack(np.meshgrid(np.arange(4 * n1) / (4 * n1),
                                     np.arange(4 * n2) / (4 * n2), indexing="ij"), axis=-1)
            v, _ = self._spline(t[..., 0], t[..., 1])
            margin = 0.01 * (v.max() - v.min())
            lo, hi = float(v.min() - margin), float(v.max() + margin)
        ends = sorted((self.offset + self.amplitude * lo, self.offset + self.amplitude * hi))
        return float(ends[0]), float(ends[1])

    def to_spec(self) -> dict:
        """Canonical dictionary description (the sampled grid is inlined)."""
        spec = {"kind": self.kind}
        if self.kind == "constant":
            spec["value"] = self.value
        if self.kind == "sampled":
            spec["grid"] = self.grid.tolist()
        if self.amplitude != 1.0:
            spec["amplitude"] = self.amplitude
        if self.offset != 0.0:
            spec["offset"] = self.offset
        return spec


_MAX_SLOPE_CACHE: dict[str, float] = {}


def _sine2_2d_max_slope() -> float:
    """Maximum of ``|grad sin^2(pi x1) sin^2(pi x2)|``, found numerically."""
    if "sine2_2d" in _MAX_SLOPE_CACHE:
        return _MAX_SLOPE_CACHE["sine2_2d"]
    p = Profile("sine2_2d")
    t = (np.arange(256) + 0.5) / 256
    pts = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)
    slope = np.linalg.norm(p.grad(pts), axis=-1)
    start = pts[np.unravel_index(np.argmax(slope), slope.shape)]
    res = optimize.minimize(lambda x: -np.linalg.norm(p.grad(x)), start, method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-14})
    value = float(max(-res.fun, slope.max()))
    _MAX_SLOPE_CACHE["sine2_2d"] = value
    return value


def profile_from_spec(spec: dict, base_dir: Path | None = None) -> Profile:
    """Build a profile from its configuration dictionary."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("profile description must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind == "constant":
        if "value" not in spec:
            raise ValueError("constant profile requires 'value'")
        prof = Profile.constant(float(spec["value"]))
    elif kind in ("sine2_1d", "sine2_2d"):
        prof = Profile(kind)
    elif kind == "sampled":
        if "grid" in spec:
            prof = Profile.sampled(spec["grid"])
        elif "grid_path" in spec:
            path = Path(spec["grid_path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            prof = Profile.from_csv(path)
        else:
            raise ValueError("sampled profile requires 'grid_path'")
    else:
        raise ValueError(f"unknown profile kind {kind!r}")
    amp = float(spec.get("amplitude", 1.0))
    off = float(spec.get("offset", 0.0))
    if amp != 1.0:
        prof = prof.scaled(amp)
    if off != 0.0:
        prof = prof.shifted(off)
    return prof


def _detect_offset(f1: Profile, f2: Profile) -> float | None:
    """Return ``a`` when ``f2 = f1 + a`` structurally, else ``None``."""
    if f1.is_constant and f2.is_constant:
        return float(f2(np.zeros(2)) - f1(np.zeros(2)))
    if f1.kind != f2.kind or f1.amplitude != f2.amplitude or f1.value != f2.value:
        return None
    if f1.kind == "sampled" and not np.array_equal(f1.grid, f2.grid):
        return None
    return float(f2.offset - f1.offset)


@dataclass(frozen=True, eq=False)
class FilmGeometry:
    """An ordered profile pair ``f1 < f2`` over the rectangle ``omega``.

    ``omega`` is ``(x_min, x_max, y_min, y_max)``.  ``parallel_offset`` is
    the constant gap ``a`` when ``f2 = f1 + a`` and ``None`` otherwise; it is
    detected automatically unless given.
    """

    f1: Profile
    f2: Profile
    omega: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    parallel_offset: float | None = None

    def __post_init__(self):
        omega = tuple(float(v) for v in self.omega)
        if len(omega) != 4 or not (omega[1] > omega[0] and omega[3] > omega[2]):
            raise GeometryError(f"omega must be (x_min, x_max, y_min, y_max) with positive area, got {omega}")
        object.__setattr__(self, "omega", omega)
        detected = _detect_offset(self.f1, self.f2)
        if self.parallel_offset is None:
            object.__setattr__(self, "parallel_offset", detected)
        else:
            a = float(self.parallel_offset)
            pts = _ordering_points(64)
            gap = self.f2(pts) - self.f1(pts)
            if not np.allclose(gap, a, rtol=0, atol=1e-12 * max(1.0, abs(a))):
                raise GeometryError(f"parallel_offset {a} does not match f2 - f1")
            object.__setattr__(self, "parallel_offset", a)
        self._check_ordering()

    def _check_ordering(self):
        pts = _ordering_points(ORDERING_SAMPLES)
        gap = self.f2(pts) - self.f1(pts)
        if not np.all(np.isfinite(gap)):
            raise GeometryError("profiles evaluate to non-finite values")
        k = np.unravel_index(np.argmin(gap), gap.shape)
        if gap[k] <= 0:
            x = pts[k]
            raise GeometryError(
                f"f1 >= f2 at x' = ({x[0]:.6g}, {x[1]:.6g}): "
                f"f1 = {self.f1(x):.6g}, f2 = {self.f2(x):.6g}")

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.omega
        return (x1 - x0) * (y1 - y0)

    @property
    def diameter(self) -> float:
        x0, x1, y0, y1 = self.omega
        return float(np.hypot(x1 - x0, y1 - y0))

    def thickness(self, x):
        return self.f2(x) - self.f1(x)

    def volume(self, n: int = 256) -> float:
        """Midpoint estimate of the cell volume, the integral of f2 - f1 over Q."""
        t = (np.arange(n) + 0.5) / n
        pts = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)
        return float(np.mean(self.thickness(pts)))

    def to_spec(self) -> dict:
        return {
            "f1": self.f1.to_spec(),
            "f2": self.f2.to_spec(),
            "omega": list(self.omega),
            "parallel_offset": self.parallel_offset,
        }


def _ordering_points(n):
    t = np.arange(n) / n
    return np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)


def flat_slab(thickness: float = 1.0, **kw) -> FilmGeometry:
    return FilmGeometry(Profile.constant(0.0), Profile.constant(thickness), **kw)


def parallel_film(f: Profile, a: float, **kw) -> FilmGeometry:
    return FilmGeometry(f, f.shifted(a), **kw)
