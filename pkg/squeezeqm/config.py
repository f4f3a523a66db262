"""Job configuration and report models."""
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, root_validator, validator


class SurfaceConfig(BaseModel):
    """Either a built-in ``preset`` with ``params`` overrides, or a custom surface given by
    ``x``, ``y``, ``z`` expressions over ``[0, L1] x [0, L2]``."""
    preset: Optional[str] = None
    name: Optional[str] = None
    x: Optional[str] = None
    y: Optional[str] = None
    z: Optional[str] = None
    lengths: Optional[Tuple[float, float]] = None
    periodic: Tuple[bool, bool] = (False, False)
    params: Dict[str, float] = Field(default_factory=dict)
    immersion_threshold: float = Field(1e-12, gt=0)

    @root_validator(skip_on_failure=True)
    def _one_form(cls, values):
        custom = [key for key in ('x', 'y', 'z', 'lengths') if values.get(key) is not None]
        if values.get('preset'):
            if custom:
                raise ValueError(f'a preset surface takes no {", ".join(custom)}')
        elif len(custom) != 4:
            raise ValueError('give either a preset or all of x, y, z and lengths')
        return values

    @property
    def is_preset(self) -> bool:
        return bool(self.preset)


class GridConfig(BaseModel):
    n1: int = Field(32, ge=3)
    n2: int = Field(32, ge=3)


class TubeConfig(BaseModel):
    epsilon: float = Field(0.1, gt=0)
    nq: int = Field(9, ge=3)
    epsilons: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    layer: Optional[int] = Field(None, ge=0)
    # q-discretization of the self-adjointized operator used for tube spectra
    normal_stencil: Literal['flux', 'potential'] = 'potential'

    @validator('nq')
    def _odd(cls, value):
        if value % 2 == 0:
            raise ValueError('nq must be odd so that a q-layer lies on the surface')
        return value

    @validator('epsilons')
    def _positive(cls, values):
        if not values or any(value <= 0 for value in values):
            raise ValueError('epsilons must be a nonempty list of positive half-widths')
        return values


class EigenConfig(BaseModel):
    k: int = Field(4, ge=1)
    tol: float = Field(1e-10, gt=0)
    seed: int = 42
    max_iter: int = Field(20000, ge=1)
    basis_size: int = Field(120, ge=8)
    exclude_constant: bool = False


class VerifyConfig(BaseModel):
    seed: int = 42
    samples: int = Field(200, ge=1)
    test_function: str = 'cos(s1)*sin(2*s2)'
    refinements: Tuple[Tuple[int, int], Tuple[int, int]] = ((32, 9), (64, 17))
    epsilon: float = Field(0.05, gt=0)
    ratio_bounds: Tuple[float, float] = (3.0, 5.0)

    @validator('refinements')
    def _odd_layers(cls, values):
        for n, nq in values:
            if n < 3 or nq < 3 or nq % 2 == 0:
                raise ValueError(f'refinement ({n}, {nq}) needs n >= 3 and an odd nq >= 3')
        return values


class JobConfig(BaseModel):
    surface: SurfaceConfig
    grid: GridConfig = Field(default_factory=GridConfig)
    tube: TubeConfig = Field(default_factory=TubeConfig)
    eigen: EigenConfig = Field(default_factory=EigenConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    output: str = 'out'


class CheckRecord(BaseModel):
    name: str
    passed: bool
    value: float
    threshold: Optional[float] = None
    detail: Dict[str, Any] = Field(default_factory=dict)


class Report(BaseModel):
    command: str
    version: str
    config: JobConfig
    seconds: float
    results: Dict[str, Any] = Field(default_factory=dict)
    checks: List[CheckRecord] = Field(default_factory=list)


class MatrixMetadata(BaseModel):
    command: str
    surface: str
    rows: int
    nonzeros: int
    ordering: str
    grid: Dict[str, Any]
    symmetry_defect: float
