import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from geocover.errors import SurfaceParseError

SIGN_TOL = 1e-12
DET_TOL = 1e-12


class Membership(str, Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


class SurfaceKind(str, Enum):
    PLANE = "plane"
    MODULAR = "modular"
    GENUS = "genus"


class GroupKind(str, Enum):
    MODULAR = "modular"
    REGULAR_GENUS = "regular_genus"


class CoverMethod(str, Enum):
    PAPER_MODULAR_TEN = "paper_modular_ten"
    BALL_RADIUS_BOUND = "ball_radius_bound"
    EXPLICIT = "explicit"


class PointKind(str, Enum):
    AREA_UNIFORM = "area_uniform"
    GEODESIC_PROGRESSION = "geodesic_progression"
    ORBIT_SAMPLE = "orbit_sample"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class UhpPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float = Field(..., description="Horizontal coordinate", examples=[0.0])
    y: float = Field(..., gt=0, description="Vertical coordinate, strictly positive", examples=[1.0])

    @classmethod
    def from_complex(cls, z: complex) -> "UhpPoint":
        return cls(x=z.real, y=z.imag)

    def to_complex(self) -> complex:
        return complex(self.x, self.y)


class DiskPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    u: float = Field(..., description="Poincare disk real part", examples=[0.0])
    v: float = Field(..., description="Poincare disk imaginary part", examples=[0.0])

    @model_validator(mode="after")
    def inside_unit_disk(self):
        if not self.u * self.u + self.v * self.v < 1.0:
            raise ValueError("disk point must satisfy u^2 + v^2 < 1")
        return self

    @classmethod
    def from_complex(cls, w: complex) -> "DiskPoint":
        return cls(u=w.real, v=w.imag)

    def to_complex(self) -> complex:
        return complex(self.u, self.v)


Entry = Union[int, float]


class Isometry(BaseModel):
    """A PSL2(R) element stored as its sign-normalized SL2 representative.

    Exact isometries keep integer entries and an exact determinant; the
    others are floats with determinant 1 up to a relative tolerance.
    """

    model_config = ConfigDict(frozen=True)

    a: Entry
    b: Entry
    c: Entry
    d: Entry
    exact: bool = False

    @model_validator(mode="before")
    @classmethod
    def normalize(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        entries = [data.get(k) for k in ("a", "b", "c", "d")]
        if any(e is None for e in entries):
            return data
        exact = bool(data.get("exact", False))
        if exact:
            ints = []
            for e in entries:
                if isinstance(e, float):
                    if not e.is_integer():
                        raise ValueError("exact isometry entries must be integers")
                    e = int(e)
                ints.append(int(e))
            a, b, c, d = ints
            if a * d - b * c != 1:
                raise ValueError(f"exact isometry must have determinant 1, got {a * d - b * c}")
            entries = ints
        else:
            a, b, c, d = (float(e) for e in entries)
            if not all(math.isfinite(e) for e in (a, b, c, d)):
                raise ValueError("isometry entries must be finite")
            scale = max(1.0, abs(a * d) + abs(b * c))
            if abs(a * d - b * c - 1.0) > DET_TOL * scale:
                raise ValueError(f"isometry determinant {a * d - b * c!r} is not 1")
            entries = [a, b, c, d]
        for e in entries:
            if abs(e) > SIGN_TOL:
                if e < 0:
                    entries = [-v for v in entries]
                break
        a, b, c, d = entries
        if not exact:
            # -0.0 would leak into serialized output
            a, b, c, d = (v + 0.0 for v in (a, b, c, d))
        return {"a": a, "b": b, "c": c, "d": d, "exact": exact}

    @classmethod
    def of(cls, a: Entry, b: Entry, c: Entry, d: Entry, exact: Optional[bool] = None) -> "Isometry":
        if exact is None:
            exact = all(isinstance(e, int) and not isinstance(e, bool) for e in (a, b, c, d))
        return cls(a=a, b=b, c=c, d=d, exact=exact)

    @classmethod
    def identity(cls, exact: bool = True) -> "Isometry":
        return cls.of(1, 0, 0, 1, exact=exact)

    @classmethod
    def from_matrix(cls, m: List[List[Entry]]) -> "Isometry":
        (a, b), (c, d) = m
        return cls.of(a, b, c, d)

    @property
    def entries(self) -> Tuple[Entry, Entry, Entry, Entry]:
        return (self.a, self.b, self.c, self.d)

    def to_matrix(self) -> List[List[Entry]]:
        return [[self.a, self.b], [self.c, self.d]]

    def key(self, tol: float = 1e-6) -> Tuple:
        """Hashable canonical form: exact entries, or entries on a tol grid."""
        if self.exact:
            return tuple(int(e) for e in self.entries)
        return tuple(int(round(e / tol)) for e in self.entries)

    def is_identity(self, tol: float = 1e-9) -> bool:
        a, b, c, d = self.entries
        return abs(a - 1) <= tol and abs(b) <= tol and abs(c) <= tol and abs(d - 1) <= tol


class Surface(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: SurfaceKind = Field(..., description="Plane, modular surface or regular genus surface")
    genus: Optional[int] = Field(None, description="Genus when kind is genus", examples=[2])

    @model_validator(mode="after")
    def genus_matches_kind(self):
        if self.kind == SurfaceKind.GENUS:
            if self.genus is None or self.genus < 2:
                raise ValueError("genus surfaces need genus >= 2")
        elif self.genus is not None:
            raise ValueError(f"{self.kind.value} surface takes no genus")
        return self

    @classmethod
    def parse(cls, text: str) -> "Surface":
        raw = text.strip().lower()
        if raw in ("plane", "modular"):
            return cls(kind=SurfaceKind(raw))
        if raw.startswith("genus:"):
            try:
                g = int(raw.split(":", 1)[1])
            except ValueError:
                raise SurfaceParseError(f"invalid genus in surface {text!r}") from None
            if g < 2:
                raise SurfaceParseError(f"genus must be >= 2, got {g}")
            return cls(kind=SurfaceKind.GENUS, genus=g)
        raise SurfaceParseError(f"unknown surface {text!r}; expected plane, modular or genus:<g>")

    @property
    def label(self) -> str:
        if self.kind == SurfaceKind.GENUS:
            return f"genus:{self.genus}"
        return self.kind.value


class PolygonData(BaseModel):
    model_config = ConfigDict(frozen=True)

    g: int = Field(..., description="Genus", examples=[2])
    beta: float = Field(..., description="Half central angle pi/(4g)")
    vertex_radius: float = Field(..., description="d(O, A) = acosh(cot^2 beta)")
    edge_radius: float = Field(..., description="d(O, D) = acosh(cot beta)")
    diam_bound: float = Field(..., description="acosh(2 cot^2 beta - 1), upper bound for the diameter")
    vertices: List[DiskPoint] = Field(..., description="4g vertices in the disk model, counterclockwise")
    pairing: List[int] = Field(..., description="Side pairing involution sigma")
    pair_maps: List[Isometry] = Field(..., description="For sides 4m and 4m+1, the map of side k onto side sigma(k)")

    @property
    def n_sides(self) -> int:
        return 4 * self.g

    @property
    def paired_sides(self) -> List[int]:
        """Side index k of each entry of pair_maps."""
        return [k for k in range(self.n_sides) if k % 4 in (0, 1)]

    @property
    def closed_form_cap(self) -> float:
        """2cosh(2 d(O,A) + diam bound) through the cot-beta expansion."""
        t = 1.0 / math.tan(self.beta) ** 2
        return 2 * ((2 * t * t - 1) * (2 * t - 1) + 2 * t * math.sqrt(t * t - 1) * math.sqrt((2 * t - 1) ** 2 - 1))


class FuchsianGroup(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: GroupKind
    genus: Optional[int] = None
    generators: List[Isometry]
    polygon: Optional[PolygonData] = None

    @model_validator(mode="after")
    def shape(self):
        if self.kind == GroupKind.MODULAR:
            if not all(gen.exact for gen in self.generators):
                raise ValueError("modular generators must be exact")
            if self.polygon is not None:
                raise ValueError("modular group carries no polygon")
        else:
            if self.polygon is None or self.genus is None:
                raise ValueError("regular genus group needs genus and polygon")
            if len(self.generators) != 4 * self.genus:
                raise ValueError(f"expected {4 * self.genus} generators, got {len(self.generators)}")
        return self

    @property
    def surface(self) -> Surface:
        if self.kind == GroupKind.MODULAR:
            return Surface(kind=SurfaceKind.MODULAR)
        return Surface(kind=SurfaceKind.GENUS, genus=self.genus)

    @property
    def exact(self) -> bool:
        return self.kind == GroupKind.MODULAR


class BallEnumeration(BaseModel):
    model_config = ConfigDict(frozen=True)

    radius: float = Field(..., description="Frobenius norm cap R")
    depth: float = Field(..., description="Hyperbolic radius acosh(R^2 / 2)")
    elements: List[Isometry] = Field(..., description="Sorted by (norm^2, canonical entries)")
    exact: bool

    @property
    def count(self) -> int:
        return len(self.elements)


class CoverSearchBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    normsq_cap: float = Field(..., ge=2, description="Frobenius norm^2 cap of the candidate ball")
    u0: Optional[float] = Field(None, ge=2, description="Modular threshold U(0) for one point pair")
    target_distance: Optional[float] = Field(None, ge=0, description="Distance threshold of a threshold cover")


class GeodesicCover(BaseModel):
    model_config = ConfigDict(frozen=True)

    surface: Surface
    gamma0: List[Isometry]
    method: CoverMethod
    bound_used: Optional[CoverSearchBounds] = None
    radical: Optional[List[Isometry]] = None

    @model_validator(mode="after")
    def identity_and_unique(self):
        if not any(e.is_identity() for e in self.gamma0):
            raise ValueError("a geodesic cover must contain the identity")
        keys = [e.key() for e in self.gamma0]
        if len(set(keys)) != len(keys):
            raise ValueError("geodesic cover has duplicate elements")
        return self

    @property
    def size(self) -> int:
        return len(self.gamma0)


class PointPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: UhpPoint
    q: UhpPoint


class VerifyReport(BaseModel):
    surface: str = Field(..., description="Surface label of the verified cover", examples=["modular"])
    method: CoverMethod = Field(..., description="How the cover was constructed")
    cover_size: int = Field(..., ge=1, description="|gamma0|")
    n_samples: int = Field(..., ge=0, description="Number of sampled pairs")
    seed: int = Field(..., description="Seed of the pair sampler")
    tolerance: float = Field(..., gt=0, description="Largest gap that still counts as a pass")
    max_abs_gap: float = Field(..., description="Largest |cover distance - oracle distance| over the sample")
    worst_pair: Optional[PointPair] = Field(None, description="Pair attaining max_abs_gap, if any pair was sampled")
    used_elements: List[Isometry] = Field(default_factory=list, description="Elements of gamma0 that were ever an argmin")
    usage_counts: List[int] = Field(default_factory=list, description="How often each used element attained the minimum")

    @property
    def passed(self) -> bool:
        return self.max_abs_gap <= self.tolerance


class DistanceResult(BaseModel):
    distance: float = Field(..., ge=0, description="Surface distance d_S(p, q)")
    argmin: Isometry = Field(..., description="First element of gamma0 attaining the minimum")
    ties: List[Isometry] = Field(default_factory=list, description="Every element within 1e-9 of the minimum")


class PointSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    surface: Surface
    points: List[UhpPoint]
    label: str = ""

    @property
    def size(self) -> int:
        return len(self.points)


class DistanceStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., description="Number of points N")
    m: int = Field(..., description="Number of distinct distances |d(P)|")
    values: List[float]
    multiplicities: List[int] = Field(..., description="Ordered-pair counts n_i")
    quadruples: int = Field(..., description="|Q(P)| = sum n_i^2")
    cs_lower_bound: float = Field(..., description="(N^4 - 2N^3) / |Q(P)|")
    thm_bound: Optional[float] = Field(None, description="Shape-only N / (K^3 ln(K N))")
    eps_eq: float

    @model_validator(mode="after")
    def counting_identities(self):
        if sum(self.multiplicities) != self.n * self.n - self.n:
            raise ValueError("sum of multiplicities must equal N^2 - N")
        if self.quadruples != sum(k * k for k in self.multiplicities):
            raise ValueError("quadruples must equal the sum of squared multiplicities")
        if self.m != len(self.values) or self.m != len(self.multiplicities):
            raise ValueError("m must match the number of distance clusters")
        if self.m * self.quadruples < (self.n * self.n - self.n) ** 2:
            raise ValueError("Cauchy-Schwarz step violated")
        return self


class CrossStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    size1: int
    size2: int
    intersection: int
    m_cross: int
    values: List[float]
    multiplicities: List[int]
    quadruples_cross: int
    bound: Optional[float] = Field(None, description="Shape-only |P1|^2|P2|^2 / (|P1 u P2|^3 ln|P1 u P2|)")

    @model_validator(mode="after")
    def counting_identities(self):
        total = self.size1 * self.size2 - self.intersection
        if sum(self.multiplicities) != total:
            raise ValueError("cross multiplicities must sum to |P1||P2| - |P1 n P2|")
        if self.quadruples_cross != sum(k * k for k in self.multiplicities):
            raise ValueError("quadruples_cross must equal the sum of squared multiplicities")
        if self.m_cross * self.quadruples_cross < total * total:
            raise ValueError("Cauchy-Schwarz step violated")
        return self


class LiftedStats(BaseModel):
    n: int = Field(..., description="Points on the surface")
    cover_size: int = Field(..., description="|gamma0| used for the lift")
    lifted_size: int = Field(..., description="Distinct lifted points gamma p")
    surface_quadruples: int = Field(..., description="|Q(P)| on the surface")
    lifted_quadruples: int = Field(..., description="|Q| of the lifted set in the plane")

    @property
    def inclusion_holds(self) -> bool:
        return self.surface_quadruples <= self.lifted_quadruples and self.lifted_size <= self.cover_size * self.n


class EquilateralReport(BaseModel):
    g: int
    r: float = Field(..., description="Target pairwise distance")
    found: int = Field(..., description="Points in the best packing")
    circle_found: int = Field(..., description="Points kept from the circle around the seed in the best packing")
    alpha_min: float = Field(..., description="2 arcsin(1 / (2 cosh(r/2)))")
    circle_cap: int = Field(..., description="floor(2 pi / alpha_min)")
    attempts: int
    seed: int
    points: List[UhpPoint] = Field(default_factory=list)


class LatticeRow(BaseModel):
    radius: float = Field(..., description="Frobenius radius R")
    count: int = Field(..., ge=0, description="#{gamma : ||gamma|| <= R}")
    ratio: float = Field(..., description="count / R^2")


class QpRow(BaseModel):
    n: int = Field(..., description="Point set size N")
    quadruples: int = Field(..., description="|Q(P)|")
    ratio: float = Field(..., description="|Q(P)| / (N^3 ln N)")
    m: int = Field(..., description="Distinct distances")
    cs_lower_bound: float = Field(..., description="(N^4 - 2N^3) / |Q(P)|")


class CoverGrowthRow(BaseModel):
    g: int = Field(..., description="Genus")
    normsq_cap: float = Field(..., description="Frobenius norm^2 cap of the cover ball")
    size: int = Field(..., description="|gamma0|")
    ratio: float = Field(..., description="size / g^6")


class RunConfig(BaseModel):
    command: str
    surface: Optional[str] = None
    seed: int = Field(0, ge=-(2**63), lt=2**63)
    output_path: Optional[str] = None
    format: OutputFormat = OutputFormat.JSON
    overrides: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("surface")
    def surface_parses(cls, v):
        if v is not None:
            Surface.parse(v)
        return v
