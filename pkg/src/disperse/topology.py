"""Graph families for the dispersion process.

Each family answers degree / neighbour / distance / ball-size queries
at a vertex address without materialising the graph, so the infinite
families (line, grid, tree) cost nothing beyond the vertices actually
visited. The finite abelian Cayley family is the one exception: its
distance and bipartiteness queries BFS the whole group once, capped
at MAX_CAYLEY_VERTICES elements.

Vertex addresses by family:

    complete, star   int index in [0, n); star hub = 0, leaves 1..n-1
    path, cycle      int offset (cycle reduced mod n)
    grid             tuple of dim ints
    hypercube        int bitmask of dim bits
    tree             tuple of child indices from the root (root = ())
    cayley           tuple of residues, one per modulus

All topology queries are read-only after construction and safe for
concurrent use.
"""

from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Iterable, Optional, Sequence

from .rng import RandomStream

__all__ = [
    "Family",
    "TopologySpec",
    "Topology",
    "build",
    "degree",
    "sample_neighbor",
    "distance_to_origin",
    "ball_size",
    "pigeonhole_radius",
    "is_bipartite",
    "default_leaf_depth",
    "COORDINATE_LIMIT",
    "MAX_CAYLEY_VERTICES",
]

# Engine aborts a run once any coordinate magnitude exceeds this; the
# known bounds keep particles within O(M log M) of the origin, so a
# hit signals either a pathological run or a bug, not normal motion.
COORDINATE_LIMIT = 1 << 40

# Cayley queries materialise the group via BFS; keep that bounded.
MAX_CAYLEY_VERTICES = 1 << 20


class Family(str, Enum):
    COMPLETE = "complete"
    STAR = "star"
    PATH = "path"
    CYCLE = "cycle"
    TREE = "tree"
    GRID = "grid"
    HYPERCUBE = "hypercube"
    CAYLEY = "cayley"


_FINITE = {Family.COMPLETE, Family.STAR, Family.CYCLE, Family.HYPERCUBE, Family.CAYLEY}


@dataclass(frozen=True)
class TopologySpec:
    """Declarative description of one graph; validated on build.

    leaf_depth applies to trees only: None means "unset, let the
    harness fill the default truncation rule", 0 means explicitly
    infinite, and a positive value truncates at that depth.
    """

    family: Family
    n: Optional[int] = None
    k: Optional[int] = None
    dim: Optional[int] = None
    leaf_depth: Optional[int] = None
    with_loops: bool = False
    moduli: Optional[tuple[int, ...]] = None
    generators: Optional[tuple[tuple[int, ...], ...]] = None

    # -- constructors ------------------------------------------------

    @staticmethod
    def complete(n: int, with_loops: bool = False) -> "TopologySpec":
        return TopologySpec(Family.COMPLETE, n=n, with_loops=with_loops)

    @staticmethod
    def star(leaves: int) -> "TopologySpec":
        return TopologySpec(Family.STAR, n=leaves + 1)

    @staticmethod
    def path() -> "TopologySpec":
        return TopologySpec(Family.PATH)

    @staticmethod
    def cycle(n: int) -> "TopologySpec":
        return TopologySpec(Family.CYCLE, n=n)

    @staticmethod
    def tree(k: int, leaf_depth: Optional[int] = None) -> "TopologySpec":
        return TopologySpec(Family.TREE, k=k, leaf_depth=leaf_depth)

    @staticmethod
    def grid(dim: int) -> "TopologySpec":
        return TopologySpec(Family.GRID, dim=dim)

    @staticmethod
    def hypercube(dim: int) -> "TopologySpec":
        return TopologySpec(Family.HYPERCUBE, dim=dim)

    @staticmethod
    def cayley(moduli: Sequence[int], generators: Iterable[Sequence[int]]) -> "TopologySpec":
        mods = tuple(int(m) for m in moduli)
        gens = tuple(tuple(int(c) % m for c, m in zip(g, mods, strict=True)) for g in generators)
        return TopologySpec(Family.CAYLEY, moduli=mods, generators=gens)

    # -- validation --------------------------------------------------

    def validate(self) -> None:
        f = self.family
        allowed = {
            Family.COMPLETE: {"n", "with_loops"},
            Family.STAR: {"n"},
            Family.PATH: set(),
            Family.CYCLE: {"n"},
            Family.TREE: {"k", "leaf_depth"},
            Family.GRID: {"dim"},
            Family.HYPERCUBE: {"dim"},
            Family.CAYLEY: {"moduli", "generators"},
        }[f]
        present = {
            name
            for name, value in (
                ("n", self.n),
                ("k", self.k),
                ("dim", self.dim),
                ("leaf_depth", self.leaf_depth),
                ("moduli", self.moduli),
                ("generators", self.generators),
            )
            if value is not None
        }
        if self.with_loops:
            present.add("with_loops")
        extra = present - allowed
        if extra:
            raise ValueError(f"{f.value}: parameters not valid for this family: {sorted(extra)}")

        if f in (Family.COMPLETE, Family.STAR, Family.CYCLE):
            if self.n is None or self.n < 1:
                raise ValueError(f"{f.value}: n >= 1 required")
            if f is Family.STAR and self.n < 2:
                raise ValueError("star: need at least one leaf (n >= 2)")
            if f is Family.CYCLE and self.n < 3:
                raise ValueError("cycle: n >= 3 required")
        elif f is Family.TREE:
            if self.k is None or self.k < 2:
                raise ValueError("tree: k >= 2 required")
            if self.leaf_depth is not None and self.leaf_depth < 0:
                raise ValueError("tree: leaf_depth must be >= 0")
        elif f in (Family.GRID, Family.HYPERCUBE):
            if self.dim is None or self.dim < 1:
                raise ValueError(f"{f.value}: dim >= 1 required")
        elif f is Family.CAYLEY:
            if not self.moduli or any(m < 2 for m in self.moduli):
                raise ValueError("cayley: moduli must be a non-empty tuple of ints >= 2")
            if not self.generators:
                raise ValueError("cayley: generator list must be non-empty")
            w = len(self.moduli)
            norm: list[tuple[int, ...]] = []
            for g in self.generators:
                if len(g) != w:
                    raise ValueError("cayley: generator width must match moduli")
                norm.append(tuple(c % m for c, m in zip(g, self.moduli)))
            # Symmetric as a multiset: count(g) == count(-g).
            for g in set(norm):
                inv = tuple((-c) % m for c, m in zip(g, self.moduli))
                if norm.count(g) != norm.count(inv):
                    raise ValueError(f"cayley: generator set not symmetric at {g}")
            n = math.prod(self.moduli)
            if n > MAX_CAYLEY_VERTICES:
                raise ValueError(f"cayley: group size {n} exceeds cap {MAX_CAYLEY_VERTICES}")

    # -- flat config serialisation -----------------------------------

    def to_config(self) -> dict[str, str]:
        out = {"family": self.family.value}
        if self.n is not None:
            out["n"] = str(self.n)
        if self.k is not None:
            out["k"] = str(self.k)
        if self.dim is not None:
            out["dim"] = str(self.dim)
        if self.leaf_depth is not None:
            out["leaf_depth"] = str(self.leaf_depth)
        if self.family is Family.COMPLETE:
            out["with_loops"] = "true" if self.with_loops else "false"
        if self.moduli is not None:
            out["moduli"] = ",".join(str(m) for m in self.moduli)
        if self.generators is not None:
            out["generators"] = ",".join(
                "(" + ",".join(str(c) for c in g) + ")" for g in self.generators
            )
        return out

    @staticmethod
    def from_config(cfg: dict[str, str]) -> "TopologySpec":
        try:
            family = Family(cfg["family"])
        except KeyError:
            raise ValueError("config: missing 'family'") from None
        except ValueError:
            raise ValueError(f"config: unknown family {cfg['family']!r}") from None

        def geti(key: str) -> Optional[int]:
            raw = cfg.get(key)
            return None if raw in (None, "") else int(raw)

        moduli = None
        if cfg.get("moduli"):
            moduli = tuple(int(tok) for tok in cfg["moduli"].split(",") if tok.strip())
        generators = None
        if cfg.get("generators"):
            tuples = re.findall(r"\(([^()]*)\)", cfg["generators"])
            if not tuples:
                raise ValueError("config: generators must be parenthesised tuples")
            generators = tuple(
                tuple(int(tok) for tok in body.split(",") if tok.strip()) for body in tuples
            )
            if moduli is not None:
                # Same canonical residues as the cayley() constructor.
                if any(len(g) != len(moduli) for g in generators):
                    raise ValueError("config: generator width must match moduli")
                generators = tuple(
                    tuple(c % m for c, m in zip(g, moduli)) for g in generators
                )
        spec = TopologySpec(
            family=family,
            n=geti("n"),
            k=geti("k"),
            dim=geti("dim"),
            leaf_depth=geti("leaf_depth"),
            with_loops=cfg.get("with_loops", "false").strip().lower() in ("1", "true", "yes"),
            moduli=moduli,
            generators=generators,
        )
        spec.validate()
        return spec


def default_leaf_depth(k: int, particles: int, eps: float = 0.25) -> int:
    """Default tree truncation: the depth upper bound plus slack.

    ceil((2 - beta_k + 2*eps) * log_{k-1} M) + 8 with eps = 0.25, so a
    run that behaves per the depth band never sees a leaf.
    """
    if k < 3:
        raise ValueError("default leaf depth rule needs k >= 3")
    if particles < 2:
        return 8
    beta = 1.0 / 3.0 - 1.0 / (3.0 * math.log(k, k - 1))
    return math.ceil((2.0 - beta + 2.0 * eps) * math.log(particles, k - 1)) + 8


# ---------------------------------------------------------------------------
# Family implementations
# ---------------------------------------------------------------------------


class Topology:
    """Query interface bound to one validated TopologySpec."""

    spec: TopologySpec
    origin: Any
    n_vertices: Optional[int]  # None when infinite
    unbounded: bool  # True when coordinates can grow without limit

    def degree(self, v: Any) -> int:
        raise NotImplementedError

    def neighbor(self, v: Any, i: int) -> Any:
        """The i-th neighbour of v, 0 <= i < degree(v), fixed order."""
        raise NotImplementedError

    def neighbors(self, v: Any) -> list[Any]:
        return [self.neighbor(v, i) for i in range(self.degree(v))]

    def sample_neighbor(self, v: Any, rand: RandomStream) -> Any:
        """Uniform draw over the neighbour multiset; exactly one draw."""
        return self.neighbor(v, rand.next_raw() % self.degree(v))

    def distance_to_origin(self, v: Any) -> int:
        raise NotImplementedError

    def ball_size(self, r: int) -> int:
        raise NotImplementedError

    def pigeonhole_radius(self, particles: int) -> int:
        if particles < 1:
            raise ValueError("particle count must be >= 1")
        if self.n_vertices is not None and particles > self.n_vertices:
            raise ValueError(f"{particles} particles exceed {self.n_vertices} vertices")
        r = 0
        while self.ball_size(r) < particles:
            r += 1
        return r

    def is_bipartite(self) -> bool:
        raise NotImplementedError

    def contains(self, v: Any) -> bool:
        try:
            self.validate_address(v)
        except ValueError:
            return False
        return True

    def validate_address(self, v: Any) -> None:
        raise NotImplementedError

    def is_truncated_leaf(self, v: Any) -> bool:
        """True only on truncated trees at depth == leaf_depth."""
        return False


class _Complete(Topology):
    unbounded = False

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self.n = spec.n
        self.with_loops = spec.with_loops
        self.origin = 0
        self.n_vertices = spec.n
        if not spec.with_loops and spec.n < 2:
            raise ValueError("complete without loops needs n >= 2 for positive degree")

    def degree(self, v: Any) -> int:
        return self.n if self.with_loops else self.n - 1

    def neighbor(self, v: Any, i: int) -> Any:
        if self.with_loops:
            return i
        return i if i < v else i + 1

    def distance_to_origin(self, v: Any) -> int:
        return 0 if v == 0 else 1

    def ball_size(self, r: int) -> int:
        return 1 if r == 0 else self.n

    def is_bipartite(self) -> bool:
        if self.with_loops:
            return False
        return self.n == 2

    def validate_address(self, v: Any) -> None:
        if not isinstance(v, int) or not 0 <= v < self.n:
            raise ValueError(f"bad complete-graph vertex {v!r}")


class _Star(Topology):
    unbounded = False

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self.n = spec.n
        self.leaves = spec.n - 1
        self.origin = 0
        self.n_vertices = spec.n

    def degree(self, v: Any) -> int:
        return self.leaves if v == 0 else 1

    def neighbor(self, v: Any, i: int) -> Any:
        return i + 1 if v == 0 else 0

    def distance_to_origin(self, v: Any) -> int:
        return 0 if v == 0 else 1

    def ball_size(self, r: int) -> int:
        return 1 if r == 0 else self.n

    def is_bipartite(self) -> bool:
        return True

    def validate_address(self, v: Any) -> None:
        if not isinstance(v, int) or not 0 <= v < self.n:
            raise ValueError(f"bad star vertex {v!r}")


class _Path(Topology):
    unbounded = True

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self.origin = 0
        self.n_vertices = None

    def degree(self, v: Any) -> int:
        return 2

    def neighbor(self, v: Any, i: int) -> Any:
        return v - 1 if i == 0 else v + 1

    def distance_to_origin(self, v: Any) -> int:
        return abs(v)

    def ball_size(self, r: int) -> int:
        return 2 * r + 1

    def is_bipartite(self) -> bool:
        return True

    def validate_address(self, v: Any) -> None:
        if not isinstance(v, int):
            raise ValueError(f"bad path vertex {v!r}")


class _Cycle(Topology):
    unbounded = False

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self.n = spec.n
        self.origin = 0
        self.n_vertices = spec.n

    def degree(self, v: Any) -> int:
        return 2

    def neighbor(self, v: Any, i: int) -> Any:
        return (v - 1) % self.n if i == 0 else (v + 1) % self.n

    def distance_to_origin(self, v: Any) -> int:
        return min(v, self.n - v)

    def ball_size(self, r: int) -> int:
        return min(2 * r + 1, self.n)

    def is_bipartite(self) -> bool:
        return self.n % 2 == 0

    def validate_address(self, v: Any) -> None:
        if not isinstance(v, int) or not 0 <= v < self.n:
            raise ValueError(f"bad cycle vertex {v!r}")


class _Tree(Topology):
    """Rooted k-regular tree: root has k children, internal vertices
    k-1 children plus a parent, so every non-leaf vertex has degree k.
    Addresses are child-index tuples from the root.
    """

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self.k = spec.k
        # None is treated as infinite here; the harness substitutes the
        # default truncation rule before building when unset.
        self.leaf_depth = spec.leaf_depth or 0
        self.origin = ()
        self.unbounded = self.leaf_depth == 0
        self.n_vertices = None if self.leaf_depth == 0 else self._full_ball(self.leaf_depth)

    def _full_ball(self, r: int) -> int:
        # 1 + k * sum_{i=0}^{r-1} (k-1)^i
        k = self.k
        if k == 2:
            return 1 + 2 * r
        return 1 + k * ((k - 1) ** r - 1) // (k - 2)

    def degree(self, v: Any) -> int:
        if self.leaf_depth and len(v) == self.leaf_depth:
            return 1
        return self.k

    def neighbor(self, v: Any, i: int) -> Any:
        if not v:
            return (i,)
        if self.leaf_depth and len(v) == self.leaf_depth:
            return v[:-1]
        return v[:-1] if i == 0 else v + (i - 1,)

    def distance_to_origin(self, v: Any) -> int:
        return len(v)

    def ball_size(self, r: int) -> int:
        if self.leaf_depth:
            r = min(r, self.leaf_depth)
        return self._full_ball(r)

    def is_bipartite(self) -> bool:
        return True

    def is_truncated_leaf(self, v: Any) -> bool:
        return bool(self.leaf_depth) and len(v) == self.leaf_depth

    def validate_address(self, v: Any) -> None:
        if not isinstance(v, tuple):
            raise ValueError(f"bad tree vertex {v!r}")
        if self.leaf_depth and len(v) > self.leaf_depth:
            raise ValueError(f"tree vertex {v!r} below truncation depth")
        for pos, c in enumerate(v):
            cap = self.k if pos == 0 else self.k - 1
            if not isinstance(c, int) or not 0 <= c < cap:
                raise ValueError(f"bad tree vertex {v!r}")


class _Grid(Topology):
    unbounded = True

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self.dim = spec.dim
        self.origin = (0,) * spec.dim
        self.n_vertices = None

    def degree(self, v: Any) -> int:
        return 2 * self.dim

    def neighbor(self, v: Any, i: int) -> Any:
        axis, sign = divmod(i, 2)
        delta = 1 if sign else -1
        return v[:axis] + (v[axis] + delta,) + v[axis + 1 :]

    def distance_to_origin(self, v: Any) -> int:
        return sum(abs(c) for c in v)

    def ball_size(self, r: int) -> int:
        d = self.dim
        return sum((2**i) * math.comb(d, i) * math.comb(r, i) for i in range(0, min(d, r) + 1))

    def is_bipartite(self) -> bool:
        return True

    def validate_address(self, v: Any) -> None:
        if not isinstance(v, tuple) or len(v) != self.dim:
            raise ValueError(f"bad grid vertex {v!r}")
        if not all(isinstance(c, int) for c in v):
            raise ValueError(f"bad grid vertex {v!r}")


class _Hypercube(Topology):
    unbounded = False

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self.dim = spec.dim
        self.origin = 0
        self.n_vertices = 1 << spec.dim

    def degree(self, v: Any) -> int:
        return self.dim

    def neighbor(self, v: Any, i: int) -> Any:
        return v ^ (1 << i)

    def distance_to_origin(self, v: Any) -> int:
        return v.bit_count()

    def ball_size(self, r: int) -> int:
        d = self.dim
        return sum(math.comb(d, i) for i in range(0, min(r, d) + 1))

    def is_bipartite(self) -> bool:
        return True

    def validate_address(self, v: Any) -> None:
        if not isinstance(v, int) or not 0 <= v < (1 << self.dim):
            raise ValueError(f"bad hypercube vertex {v!r}")


class _Cayley(Topology):
    """Cayley graph of Z_{m1} x ... x Z_{mw} under a symmetric
    generator multiset. Distance, ball and bipartiteness queries come
    from a one-time BFS over the group (the graph must be connected).
    """

    unbounded = False

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self.moduli = spec.moduli
        self.gens = tuple(
            tuple(c % m for c, m in zip(g, spec.moduli)) for g in spec.generators
        )
        self.origin = (0,) * len(spec.moduli)
        self.n_vertices = math.prod(spec.moduli)
        self._dist: dict[tuple[int, ...], int] = {self.origin: 0}
        self._ball: list[int] = [1]
        self._bipartite = True
        self._bfs()

    def _bfs(self) -> None:
        dist = self._dist
        queue = deque([self.origin])
        per_radius: dict[int, int] = {0: 1}
        while queue:
            u = queue.popleft()
            dist_u = dist[u]
            for g in self.gens:
                w = tuple((a + b) % m for a, b, m in zip(u, g, self.moduli))
                if w in dist:
                    if (dist[w] - dist_u) % 2 == 0:
                        # An even closed walk through this edge exists.
                        self._bipartite = False
                else:
                    dist[w] = dist_u + 1
                    per_radius[dist_u + 1] = per_radius.get(dist_u + 1, 0) + 1
                    queue.append(w)
        if len(dist) != self.n_vertices:
            raise ValueError(
                "cayley: generators do not generate the whole group "
                f"(reached {len(dist)} of {self.n_vertices} vertices)"
            )
        acc = 0
        self._ball = []
        for r in range(max(per_radius) + 1):
            acc += per_radius.get(r, 0)
            self._ball.append(acc)

    def degree(self, v: Any) -> int:
        return len(self.gens)

    def neighbor(self, v: Any, i: int) -> Any:
        g = self.gens[i]
        return tuple((a + b) % m for a, b, m in zip(v, g, self.moduli))

    def distance_to_origin(self, v: Any) -> int:
        return self._dist[tuple(v)]

    def ball_size(self, r: int) -> int:
        if r >= len(self._ball):
            return self.n_vertices
        return self._ball[r]

    def is_bipartite(self) -> bool:
        return self._bipartite

    def validate_address(self, v: Any) -> None:
        if (
            not isinstance(v, tuple)
            or len(v) != len(self.moduli)
            or not all(isinstance(c, int) and 0 <= c < m for c, m in zip(v, self.moduli))
        ):
            raise ValueError(f"bad cayley vertex {v!r}")


_BUILDERS = {
    Family.COMPLETE: _Complete,
    Family.STAR: _Star,
    Family.PATH: _Path,
    Family.CYCLE: _Cycle,
    Family.TREE: _Tree,
    Family.GRID: _Grid,
    Family.HYPERCUBE: _Hypercube,
    Family.CAYLEY: _Cayley,
}


def build(spec: TopologySpec) -> Topology:
    spec.validate()
    return _BUILDERS[spec.family](spec)


# Functional mirrors of the per-instance queries. Convenient for
# one-off evaluation; repeated callers should keep the built instance
# (the Cayley BFS is per-build).


def degree(spec: TopologySpec, v: Any) -> int:
    return build(spec).degree(v)


def sample_neighbor(spec: TopologySpec, v: Any, rand: RandomStream) -> Any:
    return build(spec).sample_neighbor(v, rand)


def distance_to_origin(spec: TopologySpec, v: Any) -> int:
    return build(spec).distance_to_origin(v)


def ball_size(spec: TopologySpec, r: int) -> int:
    return build(spec).ball_size(r)


def pigeonhole_radius(spec: TopologySpec, particles: int) -> int:
    return build(spec).pigeonhole_radius(particles)


def is_bipartite(spec: TopologySpec) -> bool:
    return build(spec).is_bipartite()


def with_leaf_depth(spec: TopologySpec, particles: int) -> TopologySpec:
    """Resolve an unset tree leaf_depth to the default rule."""
    if spec.family is Family.TREE and spec.leaf_depth is None:
        if spec.k >= 3:
            return replace(spec, leaf_depth=default_leaf_depth(spec.k, particles))
        return replace(spec, leaf_depth=0)
    return spec
