"""Content requests, cache-driven demand rates, and bi-rate multicast sessions.

Each user requests exactly one content per slot, drawn from its serving
HAP's Zipf popularity law (independent skew and rank order per HAP).  A
cache placement turns requests into two demand matrices: caching demand
(rate needed to insert content a HAP will store next slot) and backhaul
access demand (rate needed for requested content the HAP does not hold).
Per content, the union of demanding HAPs forms one network-coded multicast
session with two destination classes at the caching and access rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .topology import NetworkTopology


@dataclass
class Catalog:
    """Content catalog and per-HAP popularity laws.

    zipf_skews[k] is HAP k's Zipf exponent; rank_perms[k] maps popularity
    rank r (0 = most popular) to a content index, so "most popular" differs
    across HAPs.
    """

    n_contents: int
    mu_cac: float
    mu_acc: float
    zipf_skews: np.ndarray
    rank_perms: np.ndarray

    def __post_init__(self):
        if self.n_contents < 1:
            raise ValueError("catalog needs at least one content")
        if self.mu_cac <= 0 or self.mu_acc <= 0:
            raise ValueError("rate requirements must be positive")

    @classmethod
    def create(
        cls,
        n_contents: int,
        mu_cac: float,
        mu_acc: float,
        n_haps: int,
        rng: np.random.Generator,
        skew_range: tuple[float, float] = (0.5, 4.0),
    ) -> "Catalog":
        skews = rng.uniform(skew_range[0], skew_range[1], size=n_haps)
        perms = np.array([rng.permutation(n_contents) for _ in range(n_haps)])
        return cls(n_contents, mu_cac, mu_acc, skews, perms)

    def popularity(self, hap: int) -> np.ndarray:
        """Request probability per content index for users of the given HAP."""
        ranks = np.arange(1, self.n_contents + 1, dtype=float)
        weights = ranks ** (-self.zipf_skews[hap])
        pmf = np.zeros(self.n_contents)
        pmf[self.rank_perms[hap]] = weights / weights.sum()
        return pmf


@dataclass
class CachePlacement:
    """K x C binary cache matrix for one slot, capped at n_sto per HAP."""

    z: np.ndarray
    n_sto: int

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int8)
        if self.z.ndim != 2:
            raise ValueError("placement must be a K x C matrix")
        if np.any((self.z != 0) & (self.z != 1)):
            raise ValueError("placement entries must be binary")
        if np.any(self.z.sum(axis=1) > self.n_sto):
            raise ValueError("a HAP exceeds its storage capacity")

    @classmethod
    def empty(cls, n_haps: int, n_contents: int, n_sto: int) -> "CachePlacement":
        return cls(np.zeros((n_haps, n_contents), dtype=np.int8), n_sto)


@dataclass
class RequestMatrix:
    """U x C one-hot request indicators for one slot."""

    alpha: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.int8)
        if self.alpha.size and np.any(self.alpha.sum(axis=1) != 1):
            raise ValueError("each user must request exactly one content")


@dataclass
class DemandProfile:
    """Per-(HAP, content) demand rates for one slot."""

    beta: np.ndarray     # access data-rate demand
    f_cac: np.ndarray    # caching request rate
    f_acc: np.ndarray    # backhaul access demand rate


@dataclass
class MulticastSession:
    """One content's delivery tree: sources plus two destination classes."""

    content: int
    sources: tuple[int, ...]
    dest_cac: tuple[int, ...]
    dest_acc: tuple[int, ...]
    mu_cac: float
    mu_acc: float

    @property
    def destinations(self) -> tuple[int, ...]:
        return self.dest_cac + self.dest_acc

    def required_rate(self, dest: int) -> float:
        return self.mu_cac if dest in self.dest_cac else self.mu_acc


def sample_requests(catalog: Catalog, topology: NetworkTopology, rng: np.random.Generator) -> RequestMatrix:
    """Each user draws one content from its serving HAP's Zipf law."""
    U, C = topology.n_users, catalog.n_contents
    alpha = np.zeros((U, C), dtype=np.int8)
    for k in range(topology.n_haps):
        users = topology.users_of(k)
        if len(users) == 0:
            continue
        choices = rng.choice(C, size=len(users), p=catalog.popularity(k))
        alpha[users, choices] = 1
    return RequestMatrix(alpha)


def caching_demand(z_now: CachePlacement, z_next: CachePlacement, catalog: Catalog) -> np.ndarray:
    """Caching request rate: mu_cac exactly where a content is newly inserted.

    Evictions (1 -> 0) and unchanged entries generate no demand.
    """
    if z_now.z.shape != z_next.z.shape:
        raise ValueError("placement shapes differ")
    return np.where(z_next.z > z_now.z, catalog.mu_cac, 0.0)


def request_indicator(alpha: RequestMatrix, topology: NetworkTopology, n_contents: int) -> np.ndarray:
    """K x C binary matrix: 1 iff some user of HAP k requests content c."""
    ind = np.zeros((topology.n_haps, n_contents), dtype=np.int8)
    for k in range(topology.n_haps):
        users = topology.users_of(k)
        if len(users):
            ind[k] = (alpha.alpha[users].sum(axis=0) > 0).astype(np.int8)
    return ind


def access_demand(
    z: CachePlacement,
    alpha: RequestMatrix,
    catalog: Catalog,
    topology: NetworkTopology,
) -> tuple[np.ndarray, np.ndarray]:
    """Access demand beta and its backhaul share f_acc = (1 - z) * beta.

    beta[k, c] is mu_acc iff at least one user served by HAP k requests c;
    cache hits (z[k, c] = 1) strip the demand off the backhaul.
    """
    ind = request_indicator(alpha, topology, catalog.n_contents)
    beta = catalog.mu_acc * ind.astype(float)
    f_acc = (1.0 - z.z) * beta
    return beta, f_acc


def build_demand_profile(
    z_now: CachePlacement,
    z_next: CachePlacement,
    alpha: RequestMatrix,
    catalog: Catalog,
    topology: NetworkTopology,
) -> DemandProfile:
    beta, f_acc = access_demand(z_now, alpha, catalog, topology)
    f_cac = caching_demand(z_now, z_next, catalog)
    return DemandProfile(beta=beta, f_cac=f_cac, f_acc=f_acc)


def build_sessions(
    z: CachePlacement,
    demand: DemandProfile,
    topology: NetworkTopology,
    catalog: Catalog,
) -> list[MulticastSession]:
    """Assemble one bi-rate multicast session per content with positive demand.

    Sources are the HAPs currently holding the content plus every DC.  A
    demanding HAP joins the caching-rate class when its dominant demand is
    mu_cac (ties between equal rates resolve to the caching class, since
    delivery at the caching rate also covers the access need), otherwise the
    access-rate class.
    """
    sessions = []
    dc_nodes = tuple(topology.dc_nodes)
    for c in range(catalog.n_contents):
        f_cac_c = demand.f_cac[:, c]
        f_acc_c = demand.f_acc[:, c]
        demanding = np.flatnonzero((f_cac_c > 0) | (f_acc_c > 0))
        if len(demanding) == 0:
            continue
        sources = tuple(int(k) for k in np.flatnonzero(z.z[:, c])) + dc_nodes
        dest_cac, dest_acc = [], []
        for k in demanding:
            peak = max(f_cac_c[k], f_acc_c[k])
            if peak == catalog.mu_cac:
                dest_cac.append(int(k))
            else:
                dest_acc.append(int(k))
        session = MulticastSession(
            content=c,
            sources=sources,
            dest_cac=tuple(dest_cac),
            dest_acc=tuple(dest_acc),
            mu_cac=catalog.mu_cac,
            mu_acc=catalog.mu_acc,
        )
        if not session.destinations:
            continue
        for dest in session.destinations:
            if f_cac_c[dest] == 0 and f_acc_c[dest] == 0:
                raise ValueError(f"destination {dest} joined session {c} with zero demand")
        sessions.append(session)
    return sessions
