"""Seeded FANET simulation: entities, mutual link resolution, observations.

Aircraft and ground stations live in a square world; positions advance by
constant per-episode velocities.  Each step every aircraft proposes a
desirability score for every other entity, the top-2 proposals are resolved
into links (mutual consent between aircraft, capacity-limited acceptance at
ground stations), and the global reward is the fraction of aircraft with a
multi-hop path to ground.

Entity ids: aircraft occupy 0 .. n_aircraft-1, ground stations follow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractViolation

AIRCRAFT = "aircraft"
GROUND = "ground"

ACTION_CLAMP_LOW = 1e-6
ACTION_CLAMP_HIGH = 1.0 - 1e-6


@dataclass(frozen=True)
class ScenarioConfig:
    """World geometry and episode parameters.

    Distances are in world units (side of the square), velocities in world
    units per step.  ``max_links`` is fixed at 2 by the use case.
    """

    n_aircraft: int
    n_ground: int
    comm_range: float
    horizon: int = 50
    world_side: float = 1.0
    v_max: float = 0.02
    max_links: int = 2

    def __post_init__(self):
        if self.n_aircraft < 1 or self.n_ground < 1:
            raise ConfigError("need at least one aircraft and one ground station")
        if self.n_entities < 2:
            raise ConfigError("need at least two entities")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.comm_range <= 0:
            raise ConfigError("comm_range must be positive")
        if self.world_side <= 0:
            raise ConfigError("world_side must be positive")
        if self.v_max < 0:
            raise ConfigError("v_max must be non-negative")
        if self.max_links != 2:
            raise ConfigError("max_links is fixed at 2")

    @property
    def n_entities(self) -> int:
        return self.n_aircraft + self.n_ground

    @property
    def obs_dim(self) -> int:
        """1 + 3(N-1): own path-to-ground, then (ptg, lk, oc) per other entity."""
        return 1 + 3 * (self.n_entities - 1)

    @property
    def action_dim(self) -> int:
        return self.n_entities - 1

    @property
    def global_obs_dim(self) -> int:
        return self.n_aircraft * self.obs_dim

    def to_dict(self) -> dict:
        return {
            "n_aircraft": self.n_aircraft,
            "n_ground": self.n_ground,
            "horizon": self.horizon,
            "comm_range": self.comm_range,
            "world_side": self.world_side,
            "v_max": self.v_max,
            "max_links": self.max_links,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Entity:
    id: int
    kind: str
    pos: np.ndarray
    vel: np.ndarray


class LinkGraph:
    """Undirected link set over entity ids, degree-capped at resolution time."""

    __slots__ = ("edges",)

    def __init__(self, edges=()):
        self.edges = frozenset(tuple(sorted(e)) for e in edges)

    def __contains__(self, pair) -> bool:
        return tuple(sorted(pair)) in self.edges

    def __len__(self) -> int:
        return len(self.edges)

    def __eq__(self, other) -> bool:
        return isinstance(other, LinkGraph) and self.edges == other.edges

    def __repr__(self) -> str:
        return f"LinkGraph({sorted(self.edges)})"

    def degree(self, entity_id: int) -> int:
        return sum(1 for e in self.edges if entity_id in e)

    def neighbors(self, entity_id: int) -> list[int]:
        return sorted(a if b == entity_id else b for a, b in self.edges if entity_id in (a, b))


@dataclass
class WorldState:
    """Positions/velocities of all entities plus the active link graph."""

    t: int
    pos: np.ndarray  # (N, 2)
    vel: np.ndarray  # (N, 2)
    n_aircraft: int
    links: LinkGraph = field(default_factory=LinkGraph)

    @property
    def n_entities(self) -> int:
        return self.pos.shape[0]

    def kind(self, entity_id: int) -> str:
        return AIRCRAFT if entity_id < self.n_aircraft else GROUND

    @property
    def entities(self) -> list[Entity]:
        return [
            Entity(i, self.kind(i), self.pos[i].copy(), self.vel[i].copy())
            for i in range(self.n_entities)
        ]

    def copy(self) -> "WorldState":
        return WorldState(self.t, self.pos.copy(), self.vel.copy(), self.n_aircraft, self.links)


def init_world(cfg: ScenarioConfig, seed: int) -> WorldState:
    """Fresh world at t = 0: uniform positions, constant aircraft velocities.

    Identical (cfg, seed) pairs produce bit-identical worlds.
    """
    rng = np.random.default_rng(seed)
    n = cfg.n_entities
    pos = rng.uniform(0.0, cfg.world_side, size=(n, 2))
    vel = np.zeros((n, 2))
    vel[: cfg.n_aircraft] = rng.uniform(-cfg.v_max, cfg.v_max, size=(cfg.n_aircraft, 2))
    return WorldState(t=0, pos=pos, vel=vel, n_aircraft=cfg.n_aircraft)


def in_range(a: Entity, b: Entity, cfg: ScenarioConfig) -> bool:
    """True iff the Euclidean distance is at most comm_range (inclusive)."""
    return float(np.hypot(*(a.pos - b.pos))) <= cfg.comm_range


def link_range_fraction(i: int, j: int, world: WorldState, cfg: ScenarioConfig) -> float:
    """The lk feature: fraction of remaining steps the pair stays in range.

    Counts steps s in {t, ..., horizon-1} at which the constant-velocity
    extrapolations of i and j are within comm_range, normalized by the full
    horizon.  Returns -1.0 when the pair is not currently in range.
    """
    if i == j:
        raise ContractViolation("link_range_fraction needs two distinct entities")
    dp = world.pos[i] - world.pos[j]
    if float(np.hypot(*dp)) > cfg.comm_range:
        return -1.0
    dv = world.vel[i] - world.vel[j]
    steps = np.arange(0, cfg.horizon - world.t)
    rel = dp[None, :] + steps[:, None] * dv[None, :]
    count = int(np.count_nonzero(np.hypot(rel[:, 0], rel[:, 1]) <= cfg.comm_range))
    return count / cfg.horizon


def clamp_actions(desirability: np.ndarray) -> np.ndarray:
    """Map arbitrary reals into the open interval (0, 1) used by the env."""
    return np.clip(desirability, ACTION_CLAMP_LOW, ACTION_CLAMP_HIGH)


def _candidate_ids(aircraft_id: int, n_entities: int) -> list[int]:
    """Entity ids addressed by an action vector, ascending, self excluded."""
    return [e for e in range(n_entities) if e != aircraft_id]


def nominations(aircraft_id: int, desirability: np.ndarray, cfg: ScenarioConfig) -> list[int]:
    """Top-2 entity ids by desirability; ties go to the lower entity id."""
    cands = _candidate_ids(aircraft_id, cfg.n_entities)
    if desirability.shape != (cfg.n_entities - 1,):
        raise ContractViolation(
            f"desirability vector must have {cfg.n_entities - 1} entries, got {desirability.shape}"
        )
    order = sorted(range(len(cands)), key=lambda k: (-desirability[k], cands[k]))
    return [cands[k] for k in order[: cfg.max_links]]


def resolve_links(world: WorldState, proposals: np.ndarray, cfg: ScenarioConfig) -> LinkGraph:
    """Resolve per-aircraft desirability vectors into the mutual link graph.

    Aircraft-aircraft edges need both sides to nominate each other and the
    pair to be in range.  Ground stations are not agents: each accepts its
    in-range nominators in decreasing desirability order (ties to the lower
    aircraft id) up to max_links.
    """
    proposals = np.asarray(proposals, dtype=float)
    if proposals.shape != (cfg.n_aircraft, cfg.n_entities - 1):
        raise ContractViolation(
            f"proposals must have shape {(cfg.n_aircraft, cfg.n_entities - 1)}, got {proposals.shape}"
        )
    proposals = clamp_actions(proposals)

    dist = np.hypot(
        world.pos[:, None, 0] - world.pos[None, :, 0],
        world.pos[:, None, 1] - world.pos[None, :, 1],
    )
    reachable = dist <= cfg.comm_range

    noms: list[list[int]] = []
    desir_for: list[dict[int, float]] = []
    for a in range(cfg.n_aircraft):
        cands = _candidate_ids(a, cfg.n_entities)
        desir_for.append({e: proposals[a][k] for k, e in enumerate(cands)})
        noms.append(nominations(a, proposals[a], cfg))

    edges = set()
    for a in range(cfg.n_aircraft):
        for e in noms[a]:
            if e < cfg.n_aircraft:
                if a < e and a in noms[e] and reachable[a, e]:
                    edges.add((a, e))

    for g in range(cfg.n_aircraft, cfg.n_entities):
        applicants = [a for a in range(cfg.n_aircraft) if g in noms[a] and reachable[a, g]]
        applicants.sort(key=lambda a: (-desir_for[a][g], a))
        for a in applicants[: cfg.max_links]:
            edges.add((a, g))

    return LinkGraph(edges)


def path_to_ground(links: LinkGraph, world: WorldState) -> np.ndarray:
    """Per-entity indicator: 1 if the entity is a ground station or reaches one.

    Breadth-first traversal seeded with every ground station.
    """
    n = world.n_entities
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in links.edges:
        adj[a].append(b)
        adj[b].append(a)
    ptg = np.zeros(n, dtype=int)
    frontier = list(range(world.n_aircraft, n))
    for g in frontier:
        ptg[g] = 1
    while frontier:
        nxt = []
        for e in frontier:
            for nb in adj[e]:
                if not ptg[nb]:
                    ptg[nb] = 1
                    nxt.append(nb)
        frontier = nxt
    return ptg


def reward(ptg_aircraft: np.ndarray) -> float:
    """Global reward: mean path-to-ground over all aircraft, in [0, 1]."""
    ptg_aircraft = np.asarray(ptg_aircraft)
    return float(ptg_aircraft.mean())


def _lk_matrix(world: WorldState, cfg: ScenarioConfig) -> np.ndarray:
    """(N, N) matrix of lk features; -1 where a pair is not currently in range."""
    dp = world.pos[:, None, :] - world.pos[None, :, :]
    dv = world.vel[:, None, :] - world.vel[None, :, :]
    steps = np.arange(0, max(cfg.horizon - world.t, 0), dtype=float)
    rel = dp[None, ...] + steps[:, None, None, None] * dv[None, ...]
    within = np.hypot(rel[..., 0], rel[..., 1]) <= cfg.comm_range
    counts = within.sum(axis=0) if steps.size else np.zeros(dp.shape[:2])
    now_in = np.hypot(dp[..., 0], dp[..., 1]) <= cfg.comm_range
    return np.where(now_in, counts / cfg.horizon, -1.0)


def observe(world: WorldState, aircraft_id: int, cfg: ScenarioConfig, ptg: np.ndarray | None = None) -> np.ndarray:
    """Local observation: [own ptg, then (ptg, lk, oc) per other entity].

    ``oc`` maps an entity's active connection count linearly so that
    0 -> -1, 1 -> 0, 2 -> +1.  Uses the most recent link graph; at episode
    start the graph is empty.
    """
    if not 0 <= aircraft_id < world.n_aircraft:
        raise ContractViolation(f"aircraft id {aircraft_id} out of range")
    if ptg is None:
        ptg = path_to_ground(world.links, world)
    obs = np.empty(cfg.obs_dim)
    obs[0] = ptg[aircraft_id]
    k = 1
    for e in _candidate_ids(aircraft_id, world.n_entities):
        obs[k] = ptg[e]
        obs[k + 1] = link_range_fraction(aircraft_id, e, world, cfg)
        obs[k + 2] = world.links.degree(e) - 1.0
        k += 3
    return obs


def observe_all(world: WorldState, cfg: ScenarioConfig) -> np.ndarray:
    """(n_aircraft, obs_dim) stack of local observations (vectorized path)."""
    n = world.n_entities
    ptg = path_to_ground(world.links, world)
    lk = _lk_matrix(world, cfg)
    deg = np.zeros(n)
    for a, b in world.links.edges:
        deg[a] += 1
        deg[b] += 1
    obs = np.empty((cfg.n_aircraft, cfg.obs_dim))
    for a in range(cfg.n_aircraft):
        others = [e for e in range(n) if e != a]
        obs[a, 0] = ptg[a]
        obs[a, 1::3] = ptg[others]
        obs[a, 2::3] = lk[a, others]
        obs[a, 3::3] = deg[others] - 1.0
    return obs


def env_step(
    world: WorldState, joint_action: np.ndarray, cfg: ScenarioConfig
) -> tuple[WorldState, np.ndarray, float, bool]:
    """One environment step.

    Order of effects: advance positions by one velocity step, resolve links
    from the joint action, compute path-to-ground and the reward on the new
    graph, then build the next observations.  Done when t reaches horizon.
    """
    if world.t >= cfg.horizon:
        raise ContractViolation("cannot step a finished episode")
    new = WorldState(
        t=world.t + 1,
        pos=world.pos + world.vel,
        vel=world.vel,
        n_aircraft=world.n_aircraft,
    )
    new.links = resolve_links(new, joint_action, cfg)
    ptg = path_to_ground(new.links, new)
    r = reward(ptg[: cfg.n_aircraft])
    obs = observe_all(new, cfg)
    done = new.t >= cfg.horizon
    return new, obs, r, done


class FanetEnv:
    """Stateful reset/step wrapper over the functional core.

    `reset(seed)` starts a fresh episode; `step(actions)` returns
    (observations, reward, done).  Observations are an
    (n_aircraft, obs_dim) array.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.world: WorldState | None = None

    def reset(self, seed: int) -> np.ndarray:
        self.world = init_world(self.cfg, seed)
        return observe_all(self.world, self.cfg)

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, float, bool]:
        if self.world is None:
            raise ContractViolation("call reset before step")
        self.world, obs, r, done = env_step(self.world, actions, self.cfg)
        return obs, r, done

    @property
    def t(self) -> int:
        return 0 if self.world is None else self.world.t


def run_episode_random(cfg: ScenarioConfig, seed: int, rng: np.random.Generator) -> float:
    """Episode cumulative reward under uniform-random desirability vectors."""
    env = FanetEnv(cfg)
    env.reset(seed)
    total = 0.0
    for _ in range(cfg.horizon):
        actions = rng.uniform(0.0, 1.0, size=(cfg.n_aircraft, cfg.action_dim))
        _, r, done = env.step(actions)
        total += r * cfg.n_aircraft
        if done:
            break
    return total


def dump_trajectory(path: str | Path, cfg: ScenarioConfig, seed: int, action_fn) -> None:
    """Write a JSON-lines trajectory: one record per step.

    ``action_fn(obs, t)`` must return the joint action array.  Each record
    holds {t, positions, links, ptg, reward}.
    """
    env = FanetEnv(cfg)
    obs = env.reset(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for t in range(cfg.horizon):
            actions = action_fn(obs, t)
            obs, r, done = env.step(actions)
            ptg = path_to_ground(env.world.links, env.world)
            rec = {
                "t": env.world.t,
                "positions": env.world.pos.tolist(),
                "links": sorted(list(e) for e in env.world.links.edges),
                "ptg": ptg.tolist(),
                "reward": r,
            }
            fh.write(json.dumps(rec) + "\n")
            if done:
                break
