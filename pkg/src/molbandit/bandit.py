"""Selection strategies over volatile candidate sets.

Zooming with multiple plays keeps a growing set of balls over the fingerprint
dissimilarity space. Each round every arriving arm is assigned the smallest
active ball containing it (earliest-created on radius ties), ball indices are
computed as

    g(B)   = radius(B) + min over active B' of (preindex(B') + D(B, B'))
    pre(B) = rew/max(1, n) + radius(B) + conf(B)
    conf(B) = 4 * sqrt(ln(horizon) / (1 + n))

and arm indices are score * g(ball) (weighted) or g(ball) (unweighted). The
oracle plays the K arms with the largest indices. A played ball whose
confidence radius has shrunk to its radius spawns a child of half the radius
centered on the round's best-rewarded arm inside it, with counters backfilled
from the observation log. The horizon follows the doubling trick with no
restart. Greedy, decaying-epsilon-greedy and uniform random baselines share
the same selection interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fingerprint import Fingerprint, jaccard_distance


class InsufficientArms(Exception):
    """Fewer candidates than super-arm slots."""


@dataclass
class Ball:
    center: Fingerprint
    radius: float
    n: int = 0
    rew: int = 0
    created_at: int = 0

    @property
    def nu(self) -> float:
        return self.rew / max(1, self.n)


class ActiveSet:
    """Append-only list of balls; index order is creation order and the
    first ball is the radius-1 root covering the whole space."""

    def __init__(self, root: Ball):
        if root.radius != 1.0:
            raise ValueError("root ball must have radius 1")
        self.balls: list[Ball] = [root]

    def add(self, ball: Ball) -> int:
        self.balls.append(ball)
        return len(self.balls) - 1

    def __len__(self):
        return len(self.balls)

    def __iter__(self):
        return iter(self.balls)

    def __getitem__(self, i):
        return self.balls[i]


@dataclass(frozen=True)
class LogEntry:
    round: int
    fp: Fingerprint
    reward: int


class ObservationLog:
    """Append-only (round, fingerprint, reward) history, bootstrap included."""

    def __init__(self):
        self.entries: list[LogEntry] = []

    def append(self, round_t: int, fp: Fingerprint, reward: int):
        self.entries.append(LogEntry(round_t, fp, int(reward)))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class EpsilonConfig:
    eps_min: float = 0.0
    eps_max: float = 0.6
    c_d: float = 0.015
    literal_form: bool = False  # printed growing-exponent variant

    def __post_init__(self):
        if not 0.0 <= self.eps_min <= self.eps_max <= 1.0:
            raise ValueError("need 0 <= eps_min <= eps_max <= 1")
        if self.c_d <= 0.0:
            raise ValueError("c_d must be positive")


def phase_horizon(t: int) -> int:
    """Doubling-trick horizon of the phase containing round t, floored at 2.

    Phases double geometrically (horizon 2^i covers rounds 2^(i-1)+1 .. 2^i);
    the floor keeps ln(horizon) positive in the confidence radius. State is
    never reset at phase boundaries.
    """
    if t < 1:
        raise ValueError("rounds are 1-based")
    return max(2, 1 << (t - 1).bit_length())


def conf_radius(ball: Ball, horizon: int) -> float:
    """High-probability bound on the gap between the ball's empirical and
    true mean reward: 4 * sqrt(ln(horizon) / (1 + n))."""
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    return 4.0 * math.sqrt(math.log(horizon) / (1.0 + ball.n))


def preindex(ball: Ball, horizon: int) -> float:
    return ball.nu + ball.radius + conf_radius(ball, horizon)


def ball_index(ball: Ball, active: ActiveSet, horizon: int) -> float:
    """radius(B) + min over all active B' of (preindex(B') + D(centers))."""
    best = min(
        preindex(other, horizon) + jaccard_distance(ball.center, other.center)
        for other in active
    )
    return ball.radius + best


def arm_index(score: float, g_ball: float, mode: str) -> float:
    if mode == "weighted":
        return score * g_ball
    if mode == "unweighted":
        return g_ball
    raise ValueError(f"unknown mode {mode!r}")


def _distance_matrix(active: ActiveSet, fps) -> np.ndarray:
    centers = [b.center for b in active]
    out = np.empty((len(fps), len(centers)), dtype=np.float64)
    for m, fp in enumerate(fps):
        row = out[m]
        for j, c in enumerate(centers):
            row[j] = jaccard_distance(fp, c)
    return out


def _assign_from_matrix(dmat: np.ndarray, active: ActiveSet) -> np.ndarray:
    # first containing ball in (radius, creation) order is the assignment
    order = np.array(sorted(range(len(active)), key=lambda i: (active[i].radius, i)))
    radii = np.array([active[i].radius for i in order])
    containing = dmat[:, order] <= radii[None, :]
    return order[np.argmax(containing, axis=1)]


def assign_domains(active: ActiveSet, fps) -> np.ndarray:
    """Ball index per arm: the smallest-radius active ball containing the
    arm's fingerprint, earliest-created on ties. The radius-1 root makes the
    assignment total."""
    return _assign_from_matrix(_distance_matrix(active, fps), active)


def select_super_arm(indices, k: int) -> np.ndarray:
    """Positions of the K largest index values (= the max-sum K-subset);
    ties broken toward the lowest position."""
    g = np.asarray(indices, dtype=np.float64)
    m = len(g)
    if m <= k:
        raise InsufficientArms(f"{m} arms for K={k}")
    order = np.lexsort((np.arange(m), -g))
    return np.sort(order[:k])


def greedy_select(scores, k: int) -> np.ndarray:
    """Top-K by score, ties toward the lowest position."""
    return select_super_arm(scores, k)


def epsilon_t(t: int, cfg: EpsilonConfig) -> float:
    """Exploration probability at round t (decaying by default); clamped to
    [0, 1] so the literal printed growing form stays a probability."""
    sign = 1.0 if cfg.literal_form else -1.0
    eps = cfg.eps_min + (cfg.eps_max - cfg.eps_min) * math.exp(sign * cfg.c_d * (t - 1))
    return min(1.0, max(0.0, eps))


def eps_greedy_select(scores, k: int, t: int, cfg: EpsilonConfig, rng: np.random.Generator) -> np.ndarray:
    """K sequential picks; each is uniform over the unpicked candidates with
    probability epsilon_t, otherwise the highest-scoring unpicked one."""
    s = np.asarray(scores, dtype=np.float64)
    m = len(s)
    if m <= k:
        raise InsufficientArms(f"{m} arms for K={k}")
    eps = epsilon_t(t, cfg)
    greedy_order = np.lexsort((np.arange(m), -s))
    picked = np.zeros(m, dtype=bool)
    remaining = list(range(m))
    out = []
    ptr = 0
    for _ in range(k):
        if rng.random() < eps:
            j = remaining[int(rng.integers(len(remaining)))]
        else:
            while picked[greedy_order[ptr]]:
                ptr += 1
            j = int(greedy_order[ptr])
        picked[j] = True
        remaining.remove(j)
        out.append(j)
    return np.sort(np.array(out, dtype=np.int64))


def random_select(m: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform K-subset without replacement."""
    if m <= k:
        raise InsufficientArms(f"{m} arms for K={k}")
    return np.sort(rng.choice(m, size=k, replace=False).astype(np.int64))


@dataclass(frozen=True)
class RefinementEvent:
    round: int
    parent_index: int
    ball_index: int
    n0: int
    rew0: int


def backfill_counters(center: Fingerprint, radius: float, log: ObservationLog,
                      active: ActiveSet, mode: str = "domain") -> tuple[int, int]:
    """Count log entries inside the new ball.

    'ball' mode counts every entry within the radius; 'domain' mode (default)
    additionally excludes entries lying inside a pre-existing active ball of
    strictly smaller radius, i.e. the new ball's domain at creation time.
    """
    if mode not in ("domain", "ball"):
        raise ValueError(f"unknown backfill mode {mode!r}")
    smaller = [b for b in active if b.radius < radius] if mode == "domain" else []
    n0 = 0
    rew0 = 0
    for e in log:
        if jaccard_distance(e.fp, center) > radius:
            continue
        if any(jaccard_distance(e.fp, b.center) <= b.radius for b in smaller):
            continue
        n0 += 1
        rew0 += e.reward
    return n0, rew0


def maybe_refine(ball_idx: int, active: ActiveSet, round_plays, log: ObservationLog,
                 horizon: int, t: int, mode: str = "domain") -> RefinementEvent | None:
    """Spawn a half-radius child if the played ball's confidence radius is at
    or below its radius.

    round_plays: (arm_position, reward, fp) triples selected this round whose
    arms were assigned to this ball. The child is centered on the fingerprint
    of the largest-reward play (lowest arm position on ties) and its counters
    are backfilled from the full observation log.
    """
    ball = active[ball_idx]
    if conf_radius(ball, horizon) > ball.radius:
        return None
    best = max(round_plays, key=lambda p: (p[1], -p[0]))
    radius = ball.radius / 2.0
    n0, rew0 = backfill_counters(best[2], radius, log, active, mode)
    child = Ball(center=best[2], radius=radius, n=n0, rew=rew0, created_at=t)
    new_idx = active.add(child)
    return RefinementEvent(t, ball_idx, new_idx, n0, rew0)


class ZoomingStrategy:
    """Zooming with multiple plays and volatile arms (weighted or unweighted).

    Must be seeded with the initial history before the first round; all state
    (balls, counters, log) persists across doubling-trick phase boundaries.
    Set audit=True to rerun a full containment scan of every assignment each
    round (violations are collected, used by the acceptance suite).
    """

    def __init__(self, weighted: bool, backfill_mode: str = "domain", audit: bool = False):
        self.weighted = weighted
        self.name = "zooming-weighted" if weighted else "zooming-unweighted"
        self.backfill_mode = backfill_mode
        self.audit = audit
        self.active: ActiveSet | None = None
        self.log = ObservationLog()
        self.events: list[RefinementEvent] = []
        self.audit_violations: list[str] = []
        self._assignment: np.ndarray | None = None
        self._horizon: int | None = None

    def init_history(self, plays):
        """Open the root ball on the highest-reward initial play and replay
        the initial history into it; plays are (fp, reward) pairs."""
        if not plays:
            raise ValueError("initial history must be non-empty")
        best = max(range(len(plays)), key=lambda i: (plays[i][1], -i))
        root = Ball(center=plays[best][0], radius=1.0, created_at=0)
        for fp, reward in plays:
            root.n += 1
            root.rew += int(reward)
            self.log.append(0, fp, reward)
        self.active = ActiveSet(root)

    def round_info(self) -> dict:
        return {"n_balls": len(self.active), "horizon": self._horizon, "epsilon": None}

    def select(self, fps, scores, t: int, k: int, rng: np.random.Generator) -> np.ndarray:
        if self.active is None:
            raise RuntimeError("init_history was never called")
        horizon = phase_horizon(t)
        self._horizon = horizon
        dmat = _distance_matrix(self.active, fps)
        assignment = _assign_from_matrix(dmat, self.active)
        if self.audit:
            self._audit_assignment(dmat, assignment, t)
        pre = [preindex(b, horizon) for b in self.active]
        g = {}
        for bi in sorted(set(assignment.tolist())):
            center = self.active[bi].center
            g[bi] = self.active[bi].radius + min(
                pre[j] + jaccard_distance(center, other.center)
                for j, other in enumerate(self.active)
            )
        g_arm = np.array([g[bi] for bi in assignment.tolist()], dtype=np.float64)
        if self.weighted:
            g_arm = np.asarray(scores, dtype=np.float64) * g_arm
        self._assignment = assignment
        return select_super_arm(g_arm, k)

    def update(self, t: int, selected, rewards, fps):
        assignment = self._assignment
        horizon = self._horizon
        for m, r in zip(selected, rewards):
            ball = self.active[int(assignment[m])]
            ball.n += 1
            ball.rew += int(r)
            self.log.append(t, fps[m], r)
        played = sorted({int(assignment[m]) for m in selected})
        for bi in played:
            plays = [
                (int(m), int(r), fps[m])
                for m, r in zip(selected, rewards)
                if int(assignment[m]) == bi
            ]
            event = maybe_refine(bi, self.active, plays, self.log, horizon, t, self.backfill_mode)
            if event is not None:
                self.events.append(event)

    def _audit_assignment(self, dmat, assignment, t):
        # exhaustive containment scan straight off the distance matrix
        radii = np.array([b.radius for b in self.active])
        arm_rows = np.arange(len(assignment))
        assigned_radii = radii[assignment]
        if (dmat[arm_rows, assignment] > assigned_radii).any():
            for m in np.flatnonzero(dmat[arm_rows, assignment] > assigned_radii):
                self.audit_violations.append(
                    f"t={t} arm={m}: assigned ball does not contain arm")
        smaller_hit = (dmat <= radii[None, :]) & (radii[None, :] < assigned_radii[:, None])
        for m in np.flatnonzero(smaller_hit.any(axis=1)):
            self.audit_violations.append(f"t={t} arm={m}: smaller ball contains arm")

    def ball_table(self, horizon: int | None = None):
        """(creation index, radius, n, rew, preindex) rows for diagnostics."""
        h = horizon or self._horizon or 2
        return [
            (i, b.radius, b.n, b.rew, preindex(b, h))
            for i, b in enumerate(self.active)
        ]


class GreedyStrategy:
    name = "greedy"

    def round_info(self):
        return {"n_balls": None, "horizon": None, "epsilon": None}

    def select(self, fps, scores, t, k, rng):
        return greedy_select(scores, k)

    def update(self, t, selected, rewards, fps):
        pass


class EpsilonGreedyStrategy:
    name = "eps-greedy"

    def __init__(self, cfg: EpsilonConfig):
        self.cfg = cfg
        self._eps = None

    def round_info(self):
        return {"n_balls": None, "horizon": None, "epsilon": self._eps}

    def select(self, fps, scores, t, k, rng):
        self._eps = epsilon_t(t, self.cfg)
        return eps_greedy_select(scores, k, t, self.cfg, rng)

    def update(self, t, selected, rewards, fps):
        pass


class RandomStrategy:
    name = "random"

    def round_info(self):
        return {"n_balls": None, "horizon": None, "epsilon": None}

    def select(self, fps, scores, t, k, rng):
        return random_select(len(fps), k, rng)

    def update(self, t, selected, rewards, fps):
        pass
