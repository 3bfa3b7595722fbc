"""
Scenario documents: pydantic models, built-in presets and override handling.

A scenario is a JSON document. It may extend a built-in preset
("extends": "<name>") and is validated into `Scenario`; dotted `--set`
overrides are applied to the raw document before validation.
"""

import copy
import json
import logging
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .fem.fe_assembly import DEFAULT_BETA
from .fem.flexo_material import MaterialSet, material_preset
from .iga.lattice import TOPOLOGY_IDS, TopologyDef

logger = logging.getLogger(__name__)

SweepAxis = Literal["none", "tau", "beta", "mesh", "hprime", "thickness", "tessellation"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TopologyConfig(StrictModel):
    nodes: List[Tuple[float, float]]
    struts: List[Tuple[int, int]]
    clip_y: bool = True

    def to_def(self) -> TopologyDef:
        return TopologyDef(tuple(self.nodes), tuple(self.struts), self.clip_y)


class LatticeConfig(StrictModel):
    topology: str = "UC1"
    a: float = 1e-6
    b: float = 1e-6
    rho: float = 0.2
    n_x: int = 1
    n_y: int = 1
    element_aspect: float = 2.0
    width: Optional[float] = None
    custom: Optional[TopologyConfig] = None

    @field_validator("rho")
    @classmethod
    def _density_range(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError("relative density must lie in (0, 1]")
        return value

    @field_validator("n_x", "n_y")
    @classmethod
    def _at_least_one(cls, value: int) -> int:
        if value < 1:
            raise ValueError("tessellation counts must be >= 1")
        return value

    @field_validator("a", "b", "element_aspect")
    @classmethod
    def _positive(cls, value: float) -> float:
        if value <= 0.0:
            raise ValueError("must be positive")
        return value

    @model_validator(mode="after")
    def _known_topology(self):
        if self.custom is None and self.topology not in TOPOLOGY_IDS:
            raise ValueError(f"topology must be one of {TOPOLOGY_IDS} or define 'custom'")
        return self


class PatchConfig(StrictModel):
    corners: List[Tuple[float, float]]
    elements: Tuple[int, int] = (1, 1)
    label: str = ""

    @field_validator("corners")
    @classmethod
    def _four_corners(cls, value):
        if len(value) != 4:
            raise ValueError("a patch needs exactly 4 corners")
        return value


class GeometrySpec(StrictModel):
    kind: Literal["cantilever", "lattice", "patches"] = "cantilever"
    length: float = 10e-6
    thickness: float = 1e-6
    patch_grid: Tuple[int, int] = (2, 1)
    hprime: Optional[float] = None
    aspect: float = 10.0
    lattice: LatticeConfig = Field(default_factory=LatticeConfig)
    patches: List[PatchConfig] = Field(default_factory=list)

    @field_validator("length", "thickness", "aspect")
    @classmethod
    def _positive(cls, value: float) -> float:
        if value <= 0.0:
            raise ValueError("must be positive")
        return value

    @model_validator(mode="after")
    def _patches_given(self):
        if self.kind == "patches" and not self.patches:
            raise ValueError("kind 'patches' needs a non-empty 'patches' list")
        if self.patch_grid[0] < 1 or self.patch_grid[1] < 1:
            raise ValueError("patch_grid entries must be >= 1")
        return self


class MaterialOverrides(StrictModel):
    preset: Literal["standard", "one_d"] = "standard"
    mode: Literal["combined", "flexo_only", "piezo_only"] = "combined"
    E: Optional[float] = None
    nu: Optional[float] = None
    kappa11: Optional[float] = None
    kappa22: Optional[float] = None
    e11: Optional[float] = None
    e21: Optional[float] = None
    e22: Optional[float] = None
    e15: Optional[float] = None
    mu11: Optional[float] = None
    mu12: Optional[float] = None
    mu44: Optional[float] = None
    L: Optional[float] = None

    def base(self) -> MaterialSet:
        """Preset plus explicit constants, before the coupling mode is applied."""
        values = {k: v for k, v in self.model_dump(exclude={"preset", "mode"}).items() if v is not None}
        base = material_preset(self.preset)
        return MaterialSet(**{**base.model_dump(), **values})

    def build(self) -> MaterialSet:
        return self.base().with_mode(self.mode)

    @model_validator(mode="after")
    def _valid_constants(self):
        try:
            self.base()
        except ValidationError as e:
            raise ValueError("; ".join(err["msg"] for err in e.errors())) from None
        return self


class Loading(StrictModel):
    case: Literal["tip_load", "compression", "bending_deflection", "actuation", "none"] = "tip_load"
    kind: Literal["point", "traction", "displacement"] = "point"
    magnitude: float = -1.0
    deflection_ratio: Optional[float] = None
    supports: Literal["clamped", "rollers"] = "clamped"
    electrical: Literal["floating", "electrodes", "applied"] = "floating"
    potential: float = 20.0
    band: Optional[float] = None


class DGSettings(StrictModel):
    enabled: bool = True
    tau: Optional[float] = 4e10
    alpha: Optional[float] = None
    beta: float = DEFAULT_BETA

    @field_validator("tau", "alpha")
    @classmethod
    def _non_negative(cls, value):
        if value is not None and value < 0.0:
            raise ValueError("must be >= 0")
        return value

    @field_validator("beta")
    @classmethod
    def _positive_beta(cls, value: float) -> float:
        if value <= 0.0:
            raise ValueError("beta must be > 0")
        return value


class Discretization(StrictModel):
    degree: int = 3
    refinement: int = 0
    elements_along: int = 1
    elements_across: int = 1

    @field_validator("degree")
    @classmethod
    def _second_derivatives(cls, value: int) -> int:
        if value < 2:
            raise ValueError("degree must be >= 2 (second derivatives are required)")
        return value

    @field_validator("refinement")
    @classmethod
    def _non_negative(cls, value: int) -> int:
        if value < 0:
            raise ValueError("refinement must be >= 0")
        return value

    @field_validator("elements_along", "elements_across")
    @classmethod
    def _at_least_one(cls, value: int) -> int:
        if value < 1:
            raise ValueError("element counts must be >= 1")
        return value


class SweepSpec(StrictModel):
    axis: SweepAxis = "none"
    values: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _values_for_axis(self):
        if self.axis != "none" and not self.values:
            raise ValueError(f"sweep axis {self.axis!r} needs at least one value")
        if self.axis in ("tau",) and any(v < 0 for v in self.values):
            raise ValueError("tau values must be >= 0")
        if self.axis == "beta" and any(v <= 0 for v in self.values):
            raise ValueError("beta values must be > 0")
        return self

    def points(self) -> List[Optional[float]]:
        return [None] if self.axis == "none" else list(self.values)


class OutputSpec(StrictModel):
    csv: bool = True
    vtk: bool = False
    vtk_sampling: Optional[int] = None
    profile: Literal["none", "eps11_midline", "E2_thickness"] = "none"
    profile_samples: int = 41
    jump_quantity: Literal["eps11", "E2"] = "eps11"
    normalize_kem: bool = False

    @field_validator("profile_samples")
    @classmethod
    def _two_samples(cls, value: int) -> int:
        if value < 2:
            raise ValueError("a profile needs at least 2 samples")
        return value

    @field_validator("vtk_sampling")
    @classmethod
    def _positive_sampling(cls, value):
        if value is not None and value < 1:
            raise ValueError("vtk_sampling must be >= 1")
        return value


class Scenario(StrictModel):
    name: str
    description: str = ""
    notes: List[str] = Field(default_factory=list)
    geometry: GeometrySpec = Field(default_factory=GeometrySpec)
    material: MaterialOverrides = Field(default_factory=MaterialOverrides)
    load: Loading = Field(default_factory=Loading)
    dg: DGSettings = Field(default_factory=DGSettings)
    discretization: Discretization = Field(default_factory=Discretization)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    variants: List[Dict[str, Any]] = Field(default_factory=list)
    outputs: OutputSpec = Field(default_factory=OutputSpec)


DEGREE_NOTE = "Basis degree p = q = 3 is used; the quadratic choice is also supported via discretization.degree"
TAU_NOTE = "Reference tau is 4e10 (a value of 1e10 is quoted elsewhere); the sweep covers both"
KEM_NOTE = "Beam coupling factor uses the squared flexoelectric term 12 (mu / t)^2"
WEAK_COUPLING_NOTE = (
    "kappa22 is raised tenfold so 12 e21^2 / (kappa22 E) stays small; the beam-theory curve is linear in the "
    "coupling and misses the electromechanical stiffening of strongly coupled thin beams"
)
TRACTION_NOTE = (
    "Tip load is a uniform shear traction on the free end; a point load makes the maximum displacement "
    "mesh-divergent"
)
CONVERSE_NOTE = "Actuation geometry defaults to a 10:1 beam (20 um x 2 um); set geometry.length/thickness for alternatives"

_TOPOLOGY_VARIANTS = [{"label": t, "geometry.lattice.topology": t} for t in ("UC1", "UC2", "UC3", "UC4")]

PRESETS: Dict[str, Dict[str, Any]] = {
    "two_patch_jump": {
        "description": "Two-patch cantilever under a tip load: normal-strain jump at the interface versus tau",
        "notes": [DEGREE_NOTE, TAU_NOTE],
        "geometry": {"kind": "cantilever", "length": 10e-6, "thickness": 1e-6, "patch_grid": [2, 1]},
        "load": {"case": "tip_load", "kind": "point", "magnitude": -1.0, "electrical": "floating"},
        "dg": {"tau": 4e10},
        "sweep": {"axis": "tau", "values": [0.0, 1e6, 1e8, 1e10, 4e10, 1e12]},
        "variants": [
            {"label": "C0", "dg.enabled": False, "sweep.axis": "none", "sweep.values": []},
            {"label": "DG"},
        ],
        "outputs": {"profile": "eps11_midline"},
    },
    "convergence_2p": {
        "description": "Two-patch cantilever mesh convergence of the maximum displacement",
        "notes": [DEGREE_NOTE, TRACTION_NOTE],
        "geometry": {"kind": "cantilever", "length": 10e-6, "thickness": 1e-6, "patch_grid": [2, 1]},
        "load": {"case": "tip_load", "kind": "traction", "magnitude": -1.0},
        "discretization": {"elements_along": 2},
        "sweep": {"axis": "mesh", "values": [0, 1, 2, 3]},
    },
    "convergence_4p": {
        "description": "Four-patch (2 x 2) cantilever mesh convergence of the maximum displacement",
        "notes": [DEGREE_NOTE, TRACTION_NOTE],
        "geometry": {"kind": "cantilever", "length": 10e-6, "thickness": 1e-6, "patch_grid": [2, 2]},
        "load": {"case": "tip_load", "kind": "traction", "magnitude": -1.0},
        "discretization": {"elements_along": 2},
        "sweep": {"axis": "mesh", "values": [0, 1, 2, 3]},
    },
    "kem_validation": {
        "description": "Beam coupling factor versus normalized thickness against the beam-theory curve",
        "notes": [DEGREE_NOTE, KEM_NOTE, WEAK_COUPLING_NOTE],
        "geometry": {"kind": "cantilever", "patch_grid": [2, 1], "aspect": 20.0},
        "material": {"preset": "one_d", "mode": "combined", "kappa22": 12.48e-8},
        "load": {"case": "tip_load", "kind": "traction", "magnitude": -1.0, "electrical": "floating"},
        "discretization": {"elements_along": 4, "elements_across": 2, "refinement": 2},
        "sweep": {"axis": "hprime", "values": [1.0, 2.0, 5.0, 10.0, 20.0]},
        "outputs": {"normalize_kem": True},
    },
    "closed_circuit_field": {
        "description": "Cantilever with 20 V on the bottom face and a grounded top: E2 across the thickness",
        "notes": [DEGREE_NOTE],
        "geometry": {"kind": "cantilever", "length": 10e-6, "thickness": 1e-6, "patch_grid": [2, 1]},
        "load": {"case": "none", "electrical": "applied", "potential": 20.0},
        "discretization": {"elements_along": 2, "elements_across": 4},
        "outputs": {"profile": "E2_thickness", "profile_samples": 41, "jump_quantity": "E2"},
    },
    "uc_compression": {
        "description": "Unit cells under b/20 compression, grounded clamped bottom, equipotential top",
        "notes": [DEGREE_NOTE],
        "geometry": {"kind": "lattice", "lattice": {"topology": "UC1", "a": 1e-6, "b": 1e-6, "rho": 0.2}},
        "material": {"mode": "flexo_only"},
        "load": {"case": "compression", "deflection_ratio": 0.05, "supports": "clamped", "electrical": "electrodes"},
        "sweep": {"axis": "tessellation", "values": [1, 5]},
        "variants": _TOPOLOGY_VARIANTS,
    },
    "uc_compression_symmetric": {
        "description": "UC1 compression with clamped versus roller supports",
        "notes": [DEGREE_NOTE],
        "geometry": {"kind": "lattice", "lattice": {"topology": "UC1", "a": 1e-6, "b": 1e-6, "rho": 0.2}},
        "material": {"mode": "flexo_only"},
        "load": {"case": "compression", "deflection_ratio": 0.05, "electrical": "electrodes"},
        "variants": [
            {"label": "clamped", "load.supports": "clamped"},
            {"label": "rollers", "load.supports": "rollers"},
        ],
    },
    "uc_convergence": {
        "description": "Unit-cell compression under uniform refinement",
        "notes": [DEGREE_NOTE],
        "geometry": {"kind": "lattice", "lattice": {"topology": "UC1", "a": 1e-6, "b": 1e-6, "rho": 0.2}},
        "material": {"mode": "flexo_only"},
        "load": {"case": "compression", "deflection_ratio": 0.05, "electrical": "electrodes"},
        "sweep": {"axis": "mesh", "values": [0, 1, 2, 3]},
    },
    "lattice_bending": {
        "description": "10 x 2 lattice cantilevers under a b/20 tip deflection, grounded bottom, equipotential top",
        "notes": [DEGREE_NOTE],
        "geometry": {"kind": "lattice",
                     "lattice": {"topology": "UC1", "a": 1e-6, "b": 1e-6, "rho": 0.2, "n_x": 10, "n_y": 2}},
        "material": {"mode": "flexo_only"},
        "load": {"case": "bending_deflection", "deflection_ratio": 0.05, "electrical": "electrodes"},
        "variants": [{"label": "SOLID", "geometry.lattice.topology": "SOLID"}] + _TOPOLOGY_VARIANTS,
    },
    "converse_actuation": {
        "description": "Cantilever actuated by 20 V on the bottom face with a grounded top",
        "notes": [DEGREE_NOTE, CONVERSE_NOTE],
        "geometry": {"kind": "cantilever", "length": 20e-6, "thickness": 2e-6, "patch_grid": [2, 1]},
        "material": {"mode": "flexo_only"},
        "load": {"case": "actuation", "electrical": "applied", "potential": 20.0},
        "discretization": {"elements_along": 4, "elements_across": 2},
        "sweep": {"axis": "mesh", "values": [0, 1]},
    },
    "kem_size_effect": {
        "description": "Coupling factor of solid and UC1 lattice beams versus beam thickness",
        "notes": [DEGREE_NOTE],
        "geometry": {"kind": "lattice",
                     "lattice": {"topology": "UC1", "a": 1e-6, "b": 1e-6, "rho": 0.2, "n_x": 10, "n_y": 2}},
        "material": {"mode": "flexo_only"},
        "load": {"case": "bending_deflection", "deflection_ratio": 0.05, "electrical": "electrodes"},
        "sweep": {"axis": "thickness", "values": [1e-6, 2e-6, 4e-6, 8e-6]},
        "variants": [
            {"label": "SOLID", "geometry.lattice.topology": "SOLID"},
            {"label": "UC1", "geometry.lattice.topology": "UC1"},
        ],
    },
}


def list_presets() -> List[str]:
    return sorted(PRESETS)


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_value(text: str) -> Any:
    """JSON value if the text parses as one, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(doc: Dict[str, Any], path: str, value: Any) -> Dict[str, Any]:
    """Set doc[a][b][c] = value for path 'a.b.c', creating maps as needed."""
    keys = path.split(".")
    if not all(keys):
        raise ConfigError("Invalid override", [f"{path!r}: empty key in dotted path"])
    node = doc
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        elif not isinstance(child, dict):
            raise ConfigError("Invalid override", [f"{path!r}: {key!r} is not a section"])
        node = child
    node[keys[-1]] = value
    return doc


def parse_overrides(pairs: List[str]) -> Dict[str, Any]:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError("Invalid override", [f"{pair!r}: expected key=value"])
        key, text = pair.split("=", 1)
        overrides[key.strip()] = parse_value(text.strip())
    return overrides


def apply_overrides(doc: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(doc)
    for path, value in overrides.items():
        set_dotted(out, path, value)
    return out


def _validation_diagnostics(error: ValidationError) -> List[str]:
    return [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in error.errors()]


def resolve_document(doc: Dict[str, Any]) -> Dict[str, Any]:
    """Expand 'extends' against the built-in presets."""
    doc = dict(doc)
    parent = doc.pop("extends", None)
    if parent is None:
        return doc
    if parent not in PRESETS:
        raise ConfigError("Unknown preset", [f"extends: {parent!r} is not one of {list_presets()}"])
    return deep_merge({"name": parent, **PRESETS[parent]}, doc)


def validate_scenario(doc: Dict[str, Any]) -> Scenario:
    try:
        return Scenario.model_validate(resolve_document(doc))
    except ValidationError as e:
        raise ConfigError(f"Invalid scenario {doc.get('name', doc.get('extends', '?'))!r}",
                          _validation_diagnostics(e)) from e


def preset_document(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigError("Unknown scenario", [f"{name!r} is not one of {list_presets()}"])
    return {"name": name, **copy.deepcopy(PRESETS[name])}


def load_preset(name: str, overrides: Optional[Dict[str, Any]] = None) -> Scenario:
    return validate_scenario(apply_overrides(preset_document(name), overrides or {}))


def parse_document(text: str, source: str = "<config>") -> List[Dict[str, Any]]:
    """Scenario documents in a JSON text: a single scenario or {"scenarios": [...]}."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Cannot parse {source}", [f"line {e.lineno}, column {e.colno}: {e.msg}"]) from e
    if isinstance(data, dict) and "scenarios" in data:
        data = data["scenarios"]
    docs = data if isinstance(data, list) else [data]
    if not docs or not all(isinstance(d, dict) for d in docs):
        raise ConfigError(f"Cannot parse {source}", ["expected a scenario object or a list of them"])
    return docs


def load_scenarios(path: Optional[str] = None, name: Optional[str] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> List[Scenario]:
    """Scenarios from a config file (optionally selected by name) or a named preset."""
    overrides = overrides or {}
    if path is None:
        if name is None:
            raise ConfigError("Nothing to run", ["give a config file or --scenario NAME"])
        return [load_preset(name, overrides)]
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read {path}", [str(e)]) from e
    docs = parse_document(text, path)
    if name is not None:
        docs = [d for d in docs if d.get("name", d.get("extends")) == name]
        if not docs:
            raise ConfigError("Unknown scenario", [f"{name!r} is not defined in {path}"])
    logger.info(f"Loaded {len(docs)} scenario(s) from {path}")
    return [validate_scenario(apply_overrides(d, overrides)) for d in docs]


def variant_scenarios(scenario: Scenario) -> List[Tuple[str, Scenario]]:
    """(label, scenario) for each variant; a scenario without variants is its own 'base' variant."""
    if not scenario.variants:
        return [("base", scenario)]
    base = scenario.model_dump(exclude={"variants"})
    out = []
    for i, variant in enumerate(scenario.variants):
        variant = dict(variant)
        label = str(variant.pop("label", f"variant{i}"))
        doc = apply_overrides(base, variant)
        try:
            out.append((label, Scenario.model_validate(doc)))
        except ValidationError as e:
            raise ConfigError(f"Invalid variant {label!r} of {scenario.name!r}", _validation_diagnostics(e)) from e
    return out
