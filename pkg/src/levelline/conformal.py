"""Conformal map from a lattice domain onto the upper half plane.

The map is built by unzipping the boundary polygon: an initial square-root
map opens the first boundary edge onto the real line, then one elementary
map per boundary sample absorbs the hyperbolic-geodesic arc from the current
base point to the sample's image.  A final Moebius-plus-square closes the
curve and an affine normalization pins

    phi(start_point) = 0,  phi(end_point) = infinity,  phi(mid plus arc) = 1,

so the plus arc lands on the positive real ray and the minus arc on the
negative ray.  The computed map is the exact conformal map of the region
bounded by circular-arc interpolation of the boundary samples; ``refine``
subdivides polygon edges to tighten that interpolation.

All elementary pieces (Moebius, sqrt, square) have closed-form inverses and
derivatives, so the evaluator supports map, inverse, and derivative at
arbitrary interior points, vectorized.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .loewner import sqrt_upper


@dataclass(eq=False)
class ConformalMapEvaluator:
    """Composed elementary maps phi: domain -> H with boundary tables."""

    z0: complex
    z1: complex
    centers: np.ndarray      # Moebius pole per geodesic step (inf = identity)
    heights: np.ndarray      # slit height per geodesic step
    close_pole: float
    close_sign: float
    affine: tuple            # (alpha, beta): w -> alpha*w + beta
    boundary_vertex_images: np.ndarray | None = None
    start_image: float = 0.0
    end_image: float = np.inf
    domain_hash: str = ""

    # -- forward -----------------------------------------------------------

    def map(self, z):
        w = self._initial(np.asarray(z, dtype=complex))
        for c, h in zip(self.centers, self.heights):
            w = self._geodesic(w, c, h)
        w = self._close(w)
        a, b = self.affine
        return a * w + b

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        m = (z - self.z1) / (z - self.z0)
        w = 1j * np.sqrt(m)
        dw = 1j * ((self.z1 - self.z0) / (z - self.z0) ** 2) / (2.0 * np.sqrt(m))
        for c, h in zip(self.centers, self.heights):
            if np.isfinite(c):
                du = (c ** 2 / (c - w) ** 2) * dw
                u = c * w / (c - w)
            else:
                du, u = dw, w
            v = sqrt_upper(u * u + h * h)
            dw = (u / v) * du
            w = v
        x0 = self.close_pole
        if np.isfinite(x0):
            dm = (x0 ** 2 / (x0 - w) ** 2) * dw
            m = x0 * w / (x0 - w)
        else:
            dm, m = dw, w
        dq = self.close_sign * 2.0 * m * dm
        return self.affine[0] * dq

    # -- inverse -----------------------------------------------------------

    def inverse(self, w):
        a, b = self.affine
        v = (np.asarray(w, dtype=complex) - b) / a
        x0 = self.close_pole
        m = np.sqrt(v) if self.close_sign > 0 else -np.sqrt(-v)
        u = m if not np.isfinite(x0) else m / (1.0 + m / x0)
        for c, h in zip(self.centers[::-1], self.heights[::-1]):
            s = sqrt_upper(u * u - h * h)
            u = s if not np.isfinite(c) else s / (1.0 + s / c)
        mm = -u * u
        return (mm * self.z0 - self.z1) / (mm - 1.0)

    # -- elementary pieces ---------------------------------------------------

    def _initial(self, z):
        return 1j * np.sqrt((z - self.z1) / (z - self.z0))

    @staticmethod
    def _geodesic(w, c, h):
        u = w if not np.isfinite(c) else c * w / (c - w)
        return sqrt_upper(u * u + h * h)

    def _close(self, w):
        x0 = self.close_pole
        m = w if not np.isfinite(x0) else x0 * w / (x0 - w)
        return self.close_sign * m * m

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        np.savez(path, z0=self.z0, z1=self.z1, centers=self.centers,
                 heights=self.heights, close_pole=self.close_pole,
                 close_sign=self.close_sign, affine=np.asarray(self.affine),
                 boundary_vertex_images=self.boundary_vertex_images,
                 start_image=self.start_image, end_image=self.end_image,
                 domain_hash=self.domain_hash)

    @classmethod
    def load(cls, path):
        d = np.load(path, allow_pickle=False)
        return cls(z0=complex(d["z0"]), z1=complex(d["z1"]),
                   centers=d["centers"], heights=d["heights"],
                   close_pole=float(d["close_pole"]), close_sign=float(d["close_sign"]),
                   affine=(complex(d["affine"][0]).real, complex(d["affine"][1]).real),
                   boundary_vertex_images=d["boundary_vertex_images"],
                   start_image=float(d["start_image"]), end_image=float(d["end_image"]),
                   domain_hash=str(d["domain_hash"]))


def domain_fingerprint(domain):
    return hashlib.sha256(domain.dumps().encode()).hexdigest()[:16]


def _unzip_points(domain, refine):
    """Boundary samples in counterclockwise order starting at end_point.

    The walk runs end_point -> minus arc -> start_point -> plus arc (and
    closes back at end_point implicitly), with each straight piece subdivided
    ``refine`` times.
    """
    pos = domain.positions
    order = np.concatenate([domain.arc_minus, domain.arc_plus])
    anchors = [domain.end_point] + [pos[v] for v in order]
    k_insert = 1 + len(domain.arc_minus)
    anchors = anchors[:k_insert] + [domain.start_point] + anchors[k_insert:]
    anchors.append(domain.end_point)
    anchors = np.asarray(anchors, dtype=complex)
    if refine <= 1:
        return anchors[:-1]
    pieces = []
    for a, b in zip(anchors[:-1], anchors[1:]):
        ts = np.arange(refine) / refine
        pieces.append(a + ts * (b - a))
    return np.concatenate(pieces)


def map_domain_to_H(domain, refine=2, cache=True):
    """Geodesic-unzipping conformal map of the domain onto H.

    The evaluator satisfies phi(start_point)=0, phi(end_point)=infinity,
    phi(midpoint of plus arc)=1, maps the plus arc into the positive reals
    and the minus arc into the negative reals.
    """
    key = ("conformal_map", refine)
    if cache and key in domain._cache:
        return domain._cache[key]

    samples = _unzip_points(domain, refine)
    z0, z1 = samples[0], samples[1]
    rest = samples[2:]

    w = 1j * np.sqrt((rest - z1) / (rest - z0))
    centers, heights = [], []
    for k in range(len(w)):
        zeta = w[k]
        if not (np.isfinite(zeta) and zeta.imag > 0):
            raise NumericalError(f"unzip sample {k} left the upper half plane; refine")
        re, im = zeta.real, zeta.imag
        c = (abs(zeta) ** 2 / re) if abs(re) > 1e-300 else np.inf
        h = abs(zeta) ** 2 / im
        centers.append(c)
        heights.append(h)
        tail = w[k + 1:]
        if np.isfinite(c):
            tail = c * tail / (c - tail)
        w[k + 1:] = sqrt_upper(tail * tail + h * h)

    centers = np.array(centers)
    heights = np.array(heights)

    # image of z0 (initially at infinity) through the geodesic steps
    x0 = np.inf
    for c, h in zip(centers, heights):
        if np.isfinite(x0):
            if np.isfinite(c):
                if abs(x0 - c) < 1e-300:
                    raise NumericalError("closure point hit a Moebius pole; refine")
                x0 = c * x0 / (c - x0)
            x0 = np.sign(x0) * np.hypot(x0, h) if x0 != 0 else h
        else:
            x0 = -c if np.isfinite(c) else np.inf

    ev = ConformalMapEvaluator(
        z0=complex(z0), z1=complex(z1), centers=centers, heights=heights,
        close_pole=float(x0) if np.isfinite(x0) else np.inf, close_sign=1.0,
        affine=(1.0, 0.0), domain_hash=domain_fingerprint(domain),
    )

    # Orientation: pick the square's sign so the interior maps into H.
    probe = _interior_probe(domain)
    wprobe = ev._initial(np.array([probe], complex))
    for c, h in zip(ev.centers, ev.heights):
        wprobe = ev._geodesic(wprobe, c, h)
    x0p = ev.close_pole
    m = wprobe if not np.isfinite(x0p) else x0p * wprobe / (x0p - wprobe)
    ev.close_sign = 1.0 if (m.real[0] > 0) else -1.0

    # Affine normalization from nudged boundary probes.
    eps = 1e-7 * max(domain.scale, 1e-6)
    start_img = ev.map(np.array([_nudged(domain, domain.start_point)], complex))[0]
    mid_v = domain.arc_plus[len(domain.arc_plus) // 2]
    mid_img = ev.map(np.array([_nudged_vertex(domain, mid_v, eps)], complex))[0]
    alpha = 1.0 / (mid_img.real - start_img.real)
    if not np.isfinite(alpha) or alpha <= 0:
        raise NumericalError("normalization failed; boundary images out of order")
    ev.affine = (alpha, -alpha * start_img.real)

    imgs = ev.map(_nudged_cycle(domain, eps))
    ev.boundary_vertex_images = imgs.real
    ev.start_image = 0.0
    ev.end_image = np.inf
    if cache:
        domain._cache[key] = ev
    return ev


def _interior_probe(domain):
    ints = domain.interior_indices
    if len(ints):
        return domain.positions[ints].mean()
    return domain.positions.mean()


def _nudged(domain, point):
    """Edge midpoint nudged inward along the local normal."""
    cyc = domain.boundary_cycle
    pos = domain.positions[cyc]
    d = np.abs(0.5 * (pos + np.roll(pos, -1)) - point)
    k = int(np.argmin(d))
    edge = np.roll(pos, -1)[k] - pos[k]
    normal = 1j * edge / abs(edge)
    return point + 1e-7 * max(domain.scale, 1e-6) * normal


def _nudged_vertex(domain, v, eps):
    cyc = list(domain.boundary_cycle)
    k = cyc.index(v)
    prev_p = domain.positions[cyc[k - 1]]
    next_p = domain.positions[cyc[(k + 1) % len(cyc)]]
    chord = next_p - prev_p
    return domain.positions[v] + eps * 1j * chord / abs(chord)


def _nudged_cycle(domain, eps):
    cyc = domain.boundary_cycle
    pos = domain.positions[cyc]
    chord = np.roll(pos, -1) - np.roll(pos, 1)
    return pos + eps * 1j * chord / np.abs(chord)


def boundary_images_ordered(domain, evaluator):
    """Boundary vertex images in cycle order rotated to start at the start point."""
    imgs = evaluator.boundary_vertex_images
    cyc = list(domain.boundary_cycle)
    k = cyc.index(int(domain.arc_plus[0]))
    return np.concatenate([imgs[k:], imgs[:k]])


def radius_from_i(domain, evaluator):
    """Inradius of the domain seen from the preimage of i."""
    from .lattice import inradius
    z = complex(evaluator.inverse(np.array([1j], complex))[0])
    return inradius(domain, z)
