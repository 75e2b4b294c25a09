"""Capacitated k-median instances: data model, metric checks, generators, text I/O.

Points are indexed facilities first (0 .. nF-1) then clients (nF .. nF+nC-1)
in the distance matrix; the helper :meth:`Instance.fc` returns the nF x nC
facility-to-client block used everywhere else.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import METRIC_TOL

FORMAT_HEADER = "ckm v1"


@dataclass(eq=False)
class Instance:
    capacities: np.ndarray
    n_clients: int
    dist: np.ndarray
    k: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        self.capacities = np.asarray(self.capacities, dtype=np.int64)
        self.dist = np.asarray(self.dist, dtype=np.float64)
        nf, nc = self.n_facilities, int(self.n_clients)
        self.n_clients = nc
        self.k = int(self.k)
        if nf < 1 or nc < 1:
            raise ValueError("need at least one facility and one client")
        if self.dist.shape != (nf + nc, nf + nc):
            raise ValueError(f"distance matrix must be {nf + nc}x{nf + nc}, got {self.dist.shape}")
        if np.any(self.capacities < 1):
            raise ValueError("capacities must be positive integers")
        if not 1 <= self.k <= nf:
            raise ValueError(f"k must lie in [1, {nf}], got {self.k}")
        if self.k * int(self.capacities.sum()) < nc:
            raise ValueError("total soft capacity k * sum(u) is below the number of clients")

    @property
    def n_facilities(self) -> int:
        return len(self.capacities)

    @property
    def facilities(self) -> range:
        return range(self.n_facilities)

    @property
    def clients(self) -> range:
        return range(self.n_clients)

    def fc(self) -> np.ndarray:
        """Facility-to-client distances, shape (nF, nC)."""
        nf = self.n_facilities
        return self.dist[:nf, nf:]

    def cc(self) -> np.ndarray:
        """Client-to-client distances, shape (nC, nC)."""
        nf = self.n_facilities
        return self.dist[nf:, nf:]

    def hard_feasible(self) -> bool:
        """True when k facilities opened once each can hold every client."""
        top = np.sort(self.capacities)[::-1][: self.k]
        return int(top.sum()) >= self.n_clients

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.k == other.k and self.n_clients == other.n_clients
                and np.array_equal(self.capacities, other.capacities)
                and np.array_equal(self.dist, other.dist))


@dataclass
class MetricReport:
    symmetric_ok: bool
    triangle_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.symmetric_ok and not self.triangle_violations


def validate_metric(inst: Instance, tol: float = METRIC_TOL) -> MetricReport:
    """Report symmetry problems and every violated triangle inequality.

    A violation (a, c, b, slack) means d(a, c) exceeds d(a, b) + d(b, c) by
    ``slack``. Each unordered pair {a, c} is reported once, with a < c.
    """
    d = inst.dist
    symmetric_ok = bool(np.all(np.abs(d - d.T) <= tol) and np.all(np.abs(np.diag(d)) <= tol)
                        and np.all(d >= -tol))
    violations = []
    n = d.shape[0]
    for b in range(n):
        # via[a, c] = d(a, b) + d(b, c)
        slack = d - (d[:, b][:, None] + d[b, :][None, :])
        aa, cc = np.nonzero(slack > tol)
        for a, c in zip(aa.tolist(), cc.tolist()):
            if a < c:
                violations.append((a, c, b, float(slack[a, c])))
    violations.sort()
    return MetricReport(symmetric_ok, violations)


def canonical(value: float) -> float:
    """Round to the 12 significant digits used by the file format."""
    return float(f"{value:.12g}")


def gen_gap_instance(u: int, L: float) -> Instance:
    """u co-located groups of 2 facilities (capacity u) and u+1 clients, k = u+1.

    Groups sit at pairwise distance L.
    """
    if u < 2:
        raise ValueError("gap instance needs u >= 2")
    if not L > 0:
        raise ValueError("L must be positive")
    nf, nc = 2 * u, u * (u + 1)
    group = np.concatenate([np.repeat(np.arange(u), 2), np.repeat(np.arange(u), u + 1)])
    dist = np.where(group[:, None] == group[None, :], 0.0, float(L))
    return Instance(np.full(nf, u), nc, dist, u + 1, name=f"gap-u{u}-L{L:g}")


def _points(rng, n, geometry, centers):
    if geometry == "euclidean":
        return rng.uniform(0.0, 1.0, size=(n, 2))
    if geometry == "clustered":
        which = rng.integers(0, len(centers), size=n)
        return centers[which] + rng.normal(0.0, 0.05, size=(n, 2))
    raise ValueError(f"unknown geometry {geometry!r}")


def gen_random(n_facilities, n_clients, k, cap_range=(1, 3), seed=0,
               geometry="euclidean", max_resample=1000) -> Instance:
    """Random planar instance with capacities drawn uniformly from ``cap_range``.

    Capacities are resampled until the k largest hold every client, so the
    basic LP (one copy per facility) is feasible. Clustered mode scatters points
    around ceil(nF / 3) uniform centers with Gaussian spread 0.05.
    """
    lo, hi = cap_range
    if n_facilities < 1 or n_clients < 1 or not 1 <= k <= n_facilities or lo < 1 or hi < lo:
        raise ValueError("invalid generator parameters")
    if k * hi < n_clients:
        raise ValueError(f"k * max capacity = {k * hi} cannot hold {n_clients} clients")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(math.ceil(n_facilities / 3), 2))
    pts = np.vstack([_points(rng, n_facilities, geometry, centers),
                     _points(rng, n_clients, geometry, centers)])
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    dist = np.vectorize(canonical)(dist)
    dist = np.minimum(dist, dist.T)
    for _ in range(max_resample):
        caps = rng.integers(lo, hi + 1, size=n_facilities)
        if np.sort(caps)[::-1][:k].sum() >= n_clients:
            break
    else:
        raise ValueError("could not sample feasible capacities")
    return Instance(caps, n_clients, dist, k,
                    name=f"rand-{geometry}-{n_facilities}-{n_clients}-{k}-s{seed}")


def gen_suite_instance(seed: int) -> Instance:
    """Desk-scale benchmark instance: nF in [5, 8], nC in [6, 14], k in [2, 4].

    Sizes come from the seed; even seeds are Euclidean, odd seeds clustered.
    Capacities range up to ceil(nC / k) + 1 so every size draw is feasible.
    """
    g = np.random.default_rng(seed)
    nf, nc, k = int(g.integers(5, 9)), int(g.integers(6, 15)), int(g.integers(2, 5))
    geometry = "euclidean" if seed % 2 == 0 else "clustered"
    return gen_random(nf, nc, k, cap_range=(1, math.ceil(nc / k) + 1), seed=seed,
                      geometry=geometry)


class InstanceFormatError(ValueError):
    """Malformed instance text; ``line`` is 1-based."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class HeaderError(InstanceFormatError):
    pass


class VersionError(InstanceFormatError):
    pass


class DimensionError(InstanceFormatError):
    pass


class TokenError(InstanceFormatError):
    pass


class MetricError(InstanceFormatError):
    pass


def _numbers(tokens, kind, line):
    out = []
    for tok in tokens:
        try:
            out.append(kind(tok))
        except ValueError:
            raise TokenError(f"non-numeric token {tok!r}", line) from None
    return out


def read_instance(text: str) -> Instance:
    lines = [(no, ln.split()) for no, ln in enumerate(text.splitlines(), start=1)]
    lines = [(no, toks) for no, toks in lines if toks]
    if not lines:
        raise HeaderError("empty input", 1)
    no, toks = lines[0]
    if len(toks) != 2 or toks[0] != "ckm":
        raise HeaderError(f"expected '{FORMAT_HEADER}'", no)
    if toks[1] != "v1":
        raise VersionError(f"unsupported version {toks[1]!r}", no)
    if len(lines) < 3:
        raise DimensionError("missing size or capacity line", lines[-1][0])
    no, toks = lines[1]
    if len(toks) != 3:
        raise HeaderError("size line must read 'nF nC k'", no)
    nf, nc, k = _numbers(toks, int, no)
    if nf < 1 or nc < 1 or not 1 <= k <= nf:
        raise DimensionError(f"invalid sizes nF={nf} nC={nc} k={k}", no)
    no, toks = lines[2]
    if len(toks) != nf:
        raise DimensionError(f"expected {nf} capacities, got {len(toks)}", no)
    caps = _numbers(toks, int, no)
    if min(caps) < 1:
        raise TokenError("capacities must be positive", no)
    n = nf + nc
    rows = lines[3:]
    if len(rows) != n:
        last = rows[-1][0] if rows else lines[2][0]
        raise DimensionError(f"expected {n} matrix rows, got {len(rows)}", last)
    dist = np.empty((n, n))
    for r, (no, toks) in enumerate(rows):
        if len(toks) != n:
            raise DimensionError(f"matrix row has {len(toks)} entries, expected {n}", no)
        dist[r] = _numbers(toks, float, no)
    try:
        inst = Instance(np.array(caps), nc, dist, k)
    except ValueError as exc:
        raise DimensionError(str(exc), lines[1][0]) from None
    report = validate_metric(inst)
    if not report.ok:
        first_row = rows[0][0]
        if report.triangle_violations:
            a, c, b, slack = report.triangle_violations[0]
            raise MetricError(f"triangle inequality violated: d({a},{c}) exceeds "
                              f"d({a},{b}) + d({b},{c}) by {slack:.3g}", first_row + a)
        raise MetricError("matrix is not symmetric with zero diagonal", first_row)
    return inst


def write_instance(inst: Instance) -> str:
    out = [FORMAT_HEADER,
           f"{inst.n_facilities} {inst.n_clients} {inst.k}",
           " ".join(str(int(u)) for u in inst.capacities)]
    for row in inst.dist:
        out.append(" ".join(f"{v:.12g}" for v in row))
    return "\n".join(out) + "\n"
