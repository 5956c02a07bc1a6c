"""Surface models and their basic geometry.

Three kinds of closed oriented surfaces are supported:

* ``ConformalTorus`` -- metric ds^2 = e^{2 lam}(dx^2 + dy^2) on a periodic box,
  with the log-conformal factor lam stored on a uniform grid (derivatives taken
  spectrally) and optionally backed by an analytic expression.
* ``ConstantCurvature`` -- a local conformal chart lam = log(2/(1 + K0 r^2))
  realizing constant curvature K0 (sphere for K0 > 0, flat for K0 = 0,
  hyperbolic for K0 < 0).
* ``FuchsianOctagon`` -- the genus-2 surface obtained from the regular
  hyperbolic octagon with all vertex angles pi/4, as a Fuchsian group of
  side-pairing translations acting on the Poincare disk.
"""

import numpy as np
from dataclasses import dataclass, field

TWO_PI = 2.0 * np.pi

# ----------------------------------------------------------------------------
# basic types


@dataclass
class UnitTangent:
    """A point of the unit sphere bundle: position (x, y) and fiber angle theta,
    the angle between the unit vector and d/dx."""

    x: float
    y: float
    theta: float

    def as_array(self):
        return np.array([self.x, self.y, self.theta], dtype=float)


@dataclass
class ClosedGeodesic:
    """A sampled closed geodesic: samples[i] = (x, y, theta) at t = i*dt,
    covering one period T (the last sample is at T - dt)."""

    model: object
    period: float
    samples: np.ndarray          # (n, 3)
    dt: float
    source: str                  # "torus-shooting" | "octagon-word" | "constant"
    word: tuple = None           # generator index sequence (octagon only)
    axis: tuple = None           # (z0, theta0) axis data (octagon only)

    @property
    def start(self):
        x, y, th = self.samples[0]
        return UnitTangent(x, y, th)


# ----------------------------------------------------------------------------
# Moebius helpers on the Poincare disk


def mobius(M, z):
    """Apply the Moebius map of a complex 2x2 matrix to z (vectorized)."""
    return (M[0, 0] * z + M[0, 1]) / (M[1, 0] * z + M[1, 1])


def mobius_deriv(M, z):
    """Complex derivative of the Moebius map (det M = 1 assumed)."""
    return 1.0 / (M[1, 0] * z + M[1, 1]) ** 2


def disk_distance(z, w):
    num = np.abs(z - w) ** 2
    den = (1.0 - np.abs(z) ** 2) * (1.0 - np.abs(w) ** 2)
    return np.arccosh(1.0 + 2.0 * num / den)


def disk_distance0(z):
    """Hyperbolic distance from the origin."""
    return 2.0 * np.arctanh(np.abs(z))


# ----------------------------------------------------------------------------
# conformal torus


def _spectral_wavenumbers(n, L):
    return TWO_PI * np.fft.fftfreq(n, d=L / n)


class ConformalTorus:
    """Torus [0,Lx) x [0,Ly) with metric e^{2 lam}(dx^2+dy^2).

    lam is stored on an nx x ny grid (indexing: lam[i, j] = lam(x_i, y_j));
    derivatives are spectral.  If analytic callables for lam and its gradient
    are supplied (expression-backed models) they are used for off-grid
    evaluation, otherwise a periodic cubic-spline interpolant of the spectral
    grids is used.
    """

    variant = "ConformalTorus"

    def __init__(self, lam_grid, Lx, Ly, lam_fns=None):
        lam_grid = np.asarray(lam_grid, dtype=float)
        if not np.all(np.isfinite(lam_grid)):
            raise ValueError("lambda grid contains non-finite values")
        self.lam_grid = lam_grid
        self.nx, self.ny = lam_grid.shape
        self.Lx, self.Ly = float(Lx), float(Ly)
        self._lam_fns = lam_fns  # (lam, lam_x, lam_y) callables or None

        kx = _spectral_wavenumbers(self.nx, self.Lx)[:, None]
        ky = _spectral_wavenumbers(self.ny, self.Ly)[None, :]
        F = np.fft.fft2(lam_grid)
        self.lam_x_grid = np.real(np.fft.ifft2(1j * kx * F))
        self.lam_y_grid = np.real(np.fft.ifft2(1j * ky * F))
        lap = np.real(np.fft.ifft2(-(kx ** 2 + ky ** 2) * F))
        self.K_grid = -np.exp(-2.0 * lam_grid) * lap
        self._splines = None

    @classmethod
    def from_expression(cls, expr, Lx, Ly, nx, ny):
        """Build from a sympy-parseable expression in x, y."""
        import sympy as sp

        x, y = sp.symbols("x y", real=True)
        lam = sp.sympify(expr, locals={"x": x, "y": y, "pi": sp.pi})
        fns = tuple(
            sp.lambdify((x, y), e, "numpy")
            for e in (lam, sp.diff(lam, x), sp.diff(lam, y))
        )
        xs = np.arange(nx) * (Lx / nx)
        ys = np.arange(ny) * (Ly / ny)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        grid = np.broadcast_to(np.asarray(fns[0](X, Y), dtype=float), X.shape).copy()
        return cls(grid, Lx, Ly, lam_fns=fns)

    @classmethod
    def flat(cls, Lx=TWO_PI, Ly=TWO_PI, n=16):
        return cls.from_expression("0*x", Lx, Ly, n, n)

    # -- interpolation ------------------------------------------------------

    def _spline(self, grid):
        from scipy.interpolate import RectBivariateSpline

        pad = 4
        g = np.pad(grid, pad, mode="wrap")
        xs = (np.arange(-pad, self.nx + pad)) * (self.Lx / self.nx)
        ys = (np.arange(-pad, self.ny + pad)) * (self.Ly / self.ny)
        return RectBivariateSpline(xs, ys, g, kx=3, ky=3)

    def _get_splines(self):
        if self._splines is None:
            self._splines = {
                "lam": self._spline(self.lam_grid),
                "lam_x": self._spline(self.lam_x_grid),
                "lam_y": self._spline(self.lam_y_grid),
                "K": self._spline(self.K_grid),
            }
        return self._splines

    def wrap(self, x, y):
        return np.mod(x, self.Lx), np.mod(y, self.Ly)

    def lam_and_grad(self, x, y):
        """Return (lam, lam_x, lam_y) at arbitrary points (vectorized)."""
        if self._lam_fns is not None:
            l, lx, ly = (np.broadcast_to(np.asarray(f(x, y), dtype=float),
                                         np.shape(x)) if np.shape(x) else
                         float(f(x, y)) for f in self._lam_fns)
            return l, lx, ly
        x, y = self.wrap(x, y)
        sp = self._get_splines()
        return (sp["lam"](x, y, grid=False), sp["lam_x"](x, y, grid=False),
                sp["lam_y"](x, y, grid=False))

    def curvature_at(self, p):
        """Gaussian curvature at position p = (x, y); spectral K interpolated."""
        x, y = self.wrap(p[0], p[1])
        return float(self._get_splines()["K"](x, y, grid=False))

    # -- integrals ----------------------------------------------------------

    @property
    def cell_area(self):
        return (self.Lx / self.nx) * (self.Ly / self.ny)

    def area(self):
        return float(np.sum(np.exp(2.0 * self.lam_grid)) * self.cell_area)

    def total_curvature(self):
        """integral of K dA (should vanish: Gauss-Bonnet, genus 1)."""
        return float(np.sum(self.K_grid * np.exp(2.0 * self.lam_grid))
                     * self.cell_area)

    def resample(self, n):
        """lam on an n x n grid by trigonometric interpolation (exact)."""
        F = np.fft.fft2(self.lam_grid)
        out = np.zeros((n, n), dtype=complex)
        ix = np.fft.fftfreq(self.nx, 1.0 / self.nx).astype(int)
        iy = np.fft.fftfreq(self.ny, 1.0 / self.ny).astype(int)
        if n < self.nx or n < self.ny:
            raise ValueError("resample only upsamples")
        out[np.ix_(ix, iy)] = F
        return np.real(np.fft.ifft2(out)) * (n * n) / (self.nx * self.ny)


# ----------------------------------------------------------------------------
# constant curvature chart


class ConstantCurvature:
    """Local conformal chart lam = log(2/(1 + K0 r^2)) of constant curvature K0.

    For K0 < 0 the chart is valid on r < 1/sqrt(-K0) (Poincare-type disk);
    for K0 >= 0 it covers the whole plane (stereographic sphere / flat plane).
    """

    variant = "ConstantCurvature"

    def __init__(self, K0):
        if not np.isfinite(K0):
            raise ValueError("K0 must be finite")
        self.K0 = float(K0)

    def lam_and_grad(self, x, y):
        q = 1.0 + self.K0 * (np.asarray(x) ** 2 + np.asarray(y) ** 2)
        lam = np.log(2.0) - np.log(q)
        return lam, -2.0 * self.K0 * np.asarray(x) / q, -2.0 * self.K0 * np.asarray(y) / q

    def wrap(self, x, y):
        return x, y

    def curvature_at(self, p):
        return self.K0


# ----------------------------------------------------------------------------
# genus-2 octagon


class FuchsianOctagon:
    """The regular-octagon genus-2 hyperbolic surface.

    The group is generated by eight hyperbolic translations g_k (k = 0..7)
    along the diameters at angles k*pi/4, each of translation length
    2*arccosh(1 + sqrt 2); g_{k+4} = g_k^{-1} pairs opposite sides of the
    Dirichlet octagon centered at 0.  Internally the elements live in SU(1,1)
    (complex 2x2 matrices acting on the disk); the ``generators`` attribute
    exposes the conjugate real SL(2,R) matrices.
    """

    variant = "FuchsianOctagon"
    # surface-group relation: g0 g1^-1 g2 g3^-1 g0^-1 g1 g2^-1 g3 = identity
    RELATION = (0, 5, 2, 7, 4, 1, 6, 3)

    def __init__(self):
        a = 1.0 + np.sqrt(2.0)
        b = np.sqrt(2.0 + 2.0 * np.sqrt(2.0))
        self.disk_generators = [
            np.array([[a, b * np.exp(1j * k * np.pi / 4)],
                      [b * np.exp(-1j * k * np.pi / 4), a]])
            for k in range(8)
        ]
        # Cayley transform w = i(1+z)/(1-z): disk model -> upper half-plane
        C = np.array([[1j, 1j], [-1.0, 1.0]]) / np.sqrt(2j)
        Cinv = np.linalg.inv(C)
        self.generators = [np.real(C @ g @ Cinv) for g in self.disk_generators]
        self.translation_length = 2.0 * np.arccosh(a)
        # Dirichlet-side data: orthocircle centers/radii and vertex radius
        t = np.tanh(self.translation_length / 4.0)
        self._side_center = 0.5 * (t + 1.0 / t)
        self._side_radius = 0.5 * (1.0 / t - t)
        cosv = np.cos(np.pi / 8.0)
        d = self._side_center
        self.vertex_radius_euclidean = d * cosv - np.sqrt(
            (d * cosv) ** 2 - d ** 2 + self._side_radius ** 2)
        self.vertex_radius = 2.0 * np.arctanh(self.vertex_radius_euclidean)

    # -- group operations ---------------------------------------------------

    def generator(self, k):
        return self.disk_generators[k % 8]

    def word_matrix(self, word):
        M = np.eye(2, dtype=complex)
        for k in word:
            M = M @ self.disk_generators[k % 8]
        return M

    def relation_product(self):
        return self.word_matrix(self.RELATION)

    def wrap(self, x, y):
        z, _ = self.reduce(x + 1j * y)
        return z.real, z.imag

    def lam_and_grad(self, x, y):
        """Disk-chart conformal factor lam = log(2/(1-r^2)) and gradient."""
        r2 = np.asarray(x) ** 2 + np.asarray(y) ** 2
        q = 1.0 - r2
        return (np.log(2.0) - np.log(q), 2.0 * np.asarray(x) / q,
                2.0 * np.asarray(y) / q)

    def curvature_at(self, p):
        return -1.0

    def contains(self, z, margin=0.0):
        """Dirichlet test: z is no farther from 0 than from any g_k(0)'s pull."""
        d0 = disk_distance0(z)
        for g in self.disk_generators:
            if d0 > disk_distance0(mobius(g, z)) + margin:
                return False
        return True

    def reduce(self, z, max_steps=200):
        """Reduce a disk point into the fundamental octagon.

        Returns (z_reduced, applied) where applied is the SU(1,1) element with
        mobius(applied, z) = z_reduced.
        """
        if abs(z) >= 1.0 - 1e-12:
            raise ValueError("point too close to the boundary circle")
        applied = np.eye(2, dtype=complex)
        for _ in range(max_steps):
            d0 = disk_distance0(z)
            moved = [disk_distance0(mobius(g, z)) for g in self.disk_generators]
            k = int(np.argmin(moved))
            if moved[k] >= d0 - 1e-14:
                return z, applied
            g = self.disk_generators[k]
            z = mobius(g, z)
            applied = g @ applied
        raise RuntimeError("fundamental-domain reduction did not terminate")

    def reduce_tangent(self, z, theta):
        """Reduce an SM point; theta picks up the rotation arg g'(z)."""
        z0 = z
        zr, g = self.reduce(z)
        theta = np.mod(theta + np.angle(mobius_deriv(g, z0)), TWO_PI)
        return zr, theta, g

    # -- geodesics ----------------------------------------------------------

    def axis_of(self, M):
        """Axis data (z0, theta0) of a hyperbolic element: the point of the
        axis closest to 0 and the direction of translation there."""
        tr = np.real(np.trace(M))
        if abs(tr) <= 2.0 + 1e-12:
            return None
        # boundary fixed points of z -> (Az+B)/(Cz+D)
        A, B = M[0, 0], M[0, 1]
        C, D = M[1, 0], M[1, 1]
        roots = np.roots([C, D - A, -B])
        # attracting fixed point: |multiplier| = |C z + D|^{-2} ... < 1
        mults = [1.0 / np.abs(C * z + D) ** 2 for z in roots]
        za = roots[int(np.argmin(mults))]
        zr = roots[int(np.argmax(mults))]
        za, zr = za / abs(za), zr / abs(zr)
        if abs(za + zr) < 1e-9:
            # axis through the origin
            z0, dirn = 0.0 + 0.0j, za
        else:
            # orthocircle through za, zr: center c with Re(conj(z) c) = 1
            Mlin = np.array([[za.real, za.imag], [zr.real, zr.imag]])
            cx, cy = np.linalg.solve(Mlin, np.array([1.0, 1.0]))
            c = cx + 1j * cy
            rho = np.sqrt(abs(c) ** 2 - 1.0)
            z0 = c * (1.0 - rho / abs(c))
            tang = 1j * (z0 - c) / rho
            dirn = tang if np.real(np.conj(tang) * (za - z0)) > 0 else -tang
        return z0, float(np.angle(dirn))

    def geodesic_point(self, z0, theta0, t):
        """Exact geodesic flow in the disk from (z0, theta0) (vectorized in t).

        Returns (z(t), theta(t)) with theta the velocity direction."""
        w = np.tanh(np.asarray(t, dtype=float) / 2.0) * np.exp(1j * theta0)
        den = 1.0 + np.conj(z0) * w
        z = (w + z0) / den
        # velocity: d/dt of the Moebius image, direction only
        vel = np.exp(1j * theta0) * (1.0 - abs(z0) ** 2) / den ** 2
        return z, np.mod(np.angle(vel), TWO_PI)

    def closed_geodesic_from_word(self, word, n_samples=512):
        """Closed geodesic of the conjugacy class of a word, or None.

        The word is a sequence of generator indices 0..7 (inverses are
        indices k+4).  Returns None for non-hyperbolic (elliptic/parabolic)
        words, which carry no closed geodesic."""
        word = tuple(int(k) % 8 for k in word)
        if not word:
            raise ValueError("empty word")
        M = self.word_matrix(word)
        tr = abs(np.real(np.trace(M)))
        if tr <= 2.0 + 1e-10:
            return None
        T = 2.0 * np.arccosh(tr / 2.0)
        z0, theta0 = self.axis_of(M)
        ts = np.arange(n_samples) * (T / n_samples)
        zs, ths = self.geodesic_point(z0, theta0, ts)
        samples = np.empty((n_samples, 3))
        for i, (z, th) in enumerate(zip(zs, ths)):
            zr, thr, _ = self.reduce_tangent(z, th)
            samples[i] = (zr.real, zr.imag, thr)
        return ClosedGeodesic(model=self, period=T, samples=samples,
                              dt=T / n_samples, source="octagon-word",
                              word=word, axis=(z0, theta0))

    # -- Dirichlet domain geometry ------------------------------------------

    def vertices(self):
        r = self.vertex_radius_euclidean
        return [r * np.exp(1j * (2 * k + 1) * np.pi / 8.0) for k in range(8)]

    def vertex_angles(self):
        """Interior angles at the octagon vertices, computed from the side
        orthocircles meeting there."""
        angles = []
        for k in range(8):
            v = self.vertices()[k]
            c1 = self._side_center * np.exp(1j * k * np.pi / 4.0)
            c2 = self._side_center * np.exp(1j * (k + 1) * np.pi / 4.0)
            # tangents of the two side circles at v, oriented into the domain
            t1 = 1j * (v - c1)
            t2 = 1j * (v - c2)
            cosang = abs(np.real(np.conj(t1) * t2)) / (abs(t1) * abs(t2))
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return np.array(angles)

    def fundamental_domain_area(self):
        """Hyperbolic area by the angle-defect formula (6 pi - sum of angles)."""
        return 6.0 * np.pi - float(np.sum(self.vertex_angles()))


# ----------------------------------------------------------------------------
# dispatch helpers


def curvature_at(model, p):
    return model.curvature_at(p)


def build_octagon():
    return FuchsianOctagon()


def closed_geodesic_from_word(model, word, n_samples=512):
    return model.closed_geodesic_from_word(word, n_samples=n_samples)


def reduce_to_fundamental_domain(model, p):
    """Reduce a disk point; returns (point, applied SU(1,1) element)."""
    z = complex(p) if np.isscalar(p) or isinstance(p, complex) else p[0] + 1j * p[1]
    return model.reduce(z)


def surface_from_json(doc):
    """Build a SurfaceModel from its JSON description.

    {"type": "conformal_torus", "Lx":.., "Ly":.., "nx":.., "ny":..,
     "lambda": "expr" | [[..grid..]]}
    {"type": "constant", "K": ..}
    {"type": "octagon"}
    """
    kind = doc.get("type")
    if kind == "conformal_torus":
        lam = doc["lambda"]
        Lx, Ly = doc.get("Lx", TWO_PI), doc.get("Ly", TWO_PI)
        nx, ny = doc.get("nx", 64), doc.get("ny", 64)
        if isinstance(lam, str):
            return ConformalTorus.from_expression(lam, Lx, Ly, nx, ny)
        return ConformalTorus(np.asarray(lam, dtype=float), Lx, Ly)
    if kind == "constant":
        return ConstantCurvature(doc["K"])
    if kind == "octagon":
        return FuchsianOctagon()
    raise ValueError(f"unknown surface type: {kind!r}")
