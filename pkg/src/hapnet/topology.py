"""Static network geometry: HAP/DC/user placement and the directed backhaul link table.

The backhaul graph has one dedicated feeder link per data center (DC -> its
HAP) plus every ordered pair of HAPs, so a full topology carries
L = D + K*(K-1) directed links.  Node ids are global: HAPs occupy 0..K-1 and
DCs occupy K..K+D-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GeometryConfig:
    """Scenario geometry knobs (distances in meters)."""

    n_haps: int = 7
    n_dcs: int = 2
    n_users: int = 105
    coverage_radius_m: float = 15_000.0
    spacing_min_m: float = 40_000.0
    spacing_max_m: float = 60_000.0
    # Stratospheric-platform convention; the altitude fixes FSO link
    # distances and RF path loss.
    altitude_m: float = 20_000.0
    # Horizontal offset of each DC ground site from the HAP it will attach to.
    dc_offset_m: float = 10_000.0

    def validate(self) -> None:
        if self.n_haps < 1:
            raise ValueError("need at least one HAP")
        if self.n_dcs < 0 or self.n_dcs > self.n_haps:
            raise ValueError(f"n_dcs must be in [0, n_haps]; got {self.n_dcs}")
        if self.n_users < 0:
            raise ValueError("n_users must be non-negative")
        if self.coverage_radius_m <= 0:
            raise ValueError("coverage radius must be positive")
        if not (0 < self.spacing_min_m <= self.spacing_max_m):
            raise ValueError("invalid HAP spacing bounds")
        if self.altitude_m <= 0:
            raise ValueError("altitude must be positive")


@dataclass(frozen=True)
class Link:
    """Directed backhaul link with 3-D Euclidean length (meters)."""

    src: int
    dst: int
    dist_m: float

    def __post_init__(self):
        if self.dist_m <= 0:
            raise ValueError(f"link {self.src}->{self.dst} has non-positive length")


@dataclass
class NetworkTopology:
    """Immutable geometry snapshot shared read-only by all per-slot solvers.

    hap_pos:   (K, 3) HAP positions.
    dc_pos:    (D, 3) DC ground positions (z = 0).
    dc_hap:    (D,) index of the unique HAP each DC feeds.
    user_pos:  (U, 3) user ground positions.
    user_hap:  (U,) serving-HAP index per user.
    links:     ordered directed link table.
    """

    hap_pos: np.ndarray
    dc_pos: np.ndarray
    dc_hap: np.ndarray
    user_pos: np.ndarray
    user_hap: np.ndarray
    links: list[Link]
    in_links: dict[int, list[int]] = field(init=False)
    out_links: dict[int, list[int]] = field(init=False)

    def __post_init__(self):
        n = self.n_haps + self.n_dcs
        self.in_links = {node: [] for node in range(n)}
        self.out_links = {node: [] for node in range(n)}
        for idx, link in enumerate(self.links):
            self.out_links[link.src].append(idx)
            self.in_links[link.dst].append(idx)

    @property
    def n_haps(self) -> int:
        return len(self.hap_pos)

    @property
    def n_dcs(self) -> int:
        return len(self.dc_pos)

    @property
    def n_users(self) -> int:
        return len(self.user_pos)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def dc_nodes(self) -> list[int]:
        return list(range(self.n_haps, self.n_haps + self.n_dcs))

    def is_dc(self, node: int) -> bool:
        return node >= self.n_haps

    def users_of(self, hap: int) -> np.ndarray:
        return np.flatnonzero(self.user_hap == hap)

    def link_distances(self) -> np.ndarray:
        return np.array([l.dist_m for l in self.links])

    def validate(self) -> None:
        """Structural consistency of the link table and user association."""
        for d in self.dc_nodes:
            if len(self.out_links[d]) != 1 or len(self.in_links[d]) != 0:
                raise ValueError(f"DC node {d} must have exactly one outgoing and no incoming link")
        if self.n_users and (self.user_hap.min() < 0 or self.user_hap.max() >= self.n_haps):
            raise ValueError("user with unknown serving HAP")
        total_out = sum(len(v) for v in self.out_links.values())
        if total_out != self.n_links:
            raise ValueError("out-link map does not partition the link table")

    def describe(self) -> str:
        """Human-readable node + link tables for inspection."""
        lines = [f"topology: K={self.n_haps} D={self.n_dcs} U={self.n_users} L={self.n_links}", "nodes:"]
        for k in range(self.n_haps):
            x, y, z = self.hap_pos[k]
            lines.append(f"  hap {k}: ({x:.0f}, {y:.0f}, {z:.0f}) m, users={len(self.users_of(k))}")
        for i, d in enumerate(self.dc_nodes):
            x, y, z = self.dc_pos[i]
            lines.append(f"  dc {d}: ({x:.0f}, {y:.0f}, {z:.0f}) m, feeds hap {self.dc_hap[i]}")
        lines.append("links:")
        for idx, link in enumerate(self.links):
            lines.append(f"  {idx}: {link.src} -> {link.dst}  d={link.dist_m:.1f} m")
        return "\n".join(lines)


def build_topology(config: GeometryConfig, rng: np.random.Generator) -> NetworkTopology:
    """Place HAPs on a hexagonal ring around a center HAP, attach DCs and users.

    Non-center HAPs sit at evenly spread azimuths with center distance drawn
    uniformly from the configured spacing range.  Users are placed uniformly
    inside their serving HAP's coverage disc; serving sets are the disjoint
    discs themselves.  Each DC binds to a distinct HAP (the nearest one to
    its ground site) via one feeder link.
    """
    config.validate()
    K, D, U = config.n_haps, config.n_dcs, config.n_users

    hap_pos = np.zeros((K, 3))
    hap_pos[:, 2] = config.altitude_m
    for k in range(1, K):
        angle = 2.0 * np.pi * (k - 1) / max(K - 1, 1)
        radius = rng.uniform(config.spacing_min_m, config.spacing_max_m)
        hap_pos[k, 0] = radius * np.cos(angle)
        hap_pos[k, 1] = radius * np.sin(angle)

    # DC ground sites: offset from distinct HAPs' ground projections, then
    # bound to the nearest HAP not already claimed.
    dc_pos = np.zeros((D, 3))
    dc_hap = np.zeros(D, dtype=int)
    claimed: set[int] = set()
    for i in range(D):
        anchor = i % K
        theta = rng.uniform(0.0, 2.0 * np.pi)
        dc_pos[i, 0] = hap_pos[anchor, 0] + config.dc_offset_m * np.cos(theta)
        dc_pos[i, 1] = hap_pos[anchor, 1] + config.dc_offset_m * np.sin(theta)
        ground = hap_pos[:, :2] - dc_pos[i, :2]
        order = np.argsort(np.linalg.norm(ground, axis=1))
        dc_hap[i] = next(int(k) for k in order if int(k) not in claimed)
        claimed.add(int(dc_hap[i]))

    # Users: spread as evenly as possible over HAPs, uniform in each disc.
    user_hap = np.arange(U) % K if U else np.zeros(0, dtype=int)
    user_pos = np.zeros((U, 3))
    for u in range(U):
        k = user_hap[u]
        r = config.coverage_radius_m * np.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * np.pi)
        user_pos[u, 0] = hap_pos[k, 0] + r * np.cos(theta)
        user_pos[u, 1] = hap_pos[k, 1] + r * np.sin(theta)

    links: list[Link] = []
    for i in range(D):
        dist = float(np.linalg.norm(dc_pos[i] - hap_pos[dc_hap[i]]))
        links.append(Link(src=K + i, dst=int(dc_hap[i]), dist_m=dist))
    for a in range(K):
        for b in range(K):
            if a != b:
                dist = float(np.linalg.norm(hap_pos[a] - hap_pos[b]))
                links.append(Link(src=a, dst=b, dist_m=dist))

    topo = NetworkTopology(
        hap_pos=hap_pos,
        dc_pos=dc_pos,
        dc_hap=dc_hap,
        user_pos=user_pos,
        user_hap=user_hap,
        links=links,
    )
    topo.validate()
    assert topo.n_links == D + K * (K - 1)
    return topo
