import hashlib
import json
import os
import threading


try:
    import tomllib
except ImportError:
    import tomli as tomllib

from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.exceptions import ConfigError


def get_project_root() -> Path:
    """Get the project root directory"""
    return Path(__file__).resolve().parent.parent


PROJECT_ROOT = get_project_root()
OUTPUT_DIR_ENV = "BRANCHFLOW_OUTPUT_DIR"

# keys that never change results; left out of the config hash
_HASH_EXCLUDED = {("run", "output_dir"), ("run", "workers")}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSettings(_Section):
    master_seed: int = Field(..., ge=0, lt=2**64, description="Seed of every random stream")
    replicas: int = Field(10_000, ge=1, description="Default replica count")
    workers: Optional[int] = Field(
        None, ge=1, description="Worker processes (None for all available cores)"
    )
    output_dir: str = Field("results", description="Artifact directory")
    max_events: int = Field(10**8, ge=1, description="Event cap per simulated path")


class FamilySettings(_Section):
    name: str = Field(..., description="Catalog entry the numeric fields override")
    b0: Optional[float] = Field(None, description="Drift of the base mechanism")
    c: Optional[float] = Field(None, ge=0, description="Diffusion coefficient sigma^2")
    gamma_m: Optional[float] = Field(None, ge=0, description="Exponential jump amplitude")
    rho_m: Optional[float] = Field(None, gt=0, description="Exponential jump decay")
    h: Optional[float] = Field(None, ge=0, description="Linear part of psi")
    gamma: Optional[float] = Field(None, ge=0, description="Jump amplitude of psi")
    rho: Optional[float] = Field(None, gt=0, description="Jump decay of psi")
    atoms: List[Tuple[float, float]] = Field(
        default_factory=list, description="(u, mass) atoms of the base jump measure"
    )

    def overrides(self) -> Dict[str, object]:
        values = {
            key: getattr(self, key)
            for key in ("b0", "c", "gamma_m", "rho_m", "h", "gamma", "rho")
            if getattr(self, key) is not None
        }
        if self.atoms:
            values["atoms"] = tuple(tuple(atom) for atom in self.atoms)
        return values


class SolverSettings(_Section):
    grid_points: int = Field(200, ge=2, description="M: the shared grid has M+1 points")
    step: float = Field(1e-3, gt=0, description="RK4 step in time units")
    max_time: float = Field(100.0, gt=0, description="Largest horizon a solver accepts")

    @model_validator(mode="after")
    def _step_fits(self) -> "SolverSettings":
        if self.step > self.max_time:
            raise ValueError("solver step must not exceed max_time")
        return self


class MechSettings(_Section):
    k_list: List[int] = Field(..., description="Scaling indices to check")
    grid_bound: float = Field(5.0, gt=0, description="z ranges over [0, grid_bound]")
    n_grid: int = Field(101, ge=2, description="Lattice points per axis")
    oracle_t: float = Field(1.0, gt=0, description="Horizon of the single-level Laplace consistency table")
    oracle_lambda: float = Field(1.0, ge=0, description="λ of the single-level Laplace consistency table")


class SimulateSettings(_Section):
    probs: List[float] = Field(..., description="Offspring probabilities p_0..p_M")
    sigma: float = Field(..., gt=0, description="Event rate per individual")
    x0: int = Field(..., ge=0)
    horizon: float = Field(..., gt=0)
    t_list: List[float] = Field(..., min_length=1)
    s_points: List[float] = Field(default_factory=lambda: [0.2, 0.5, 0.8])
    replicas: Optional[int] = Field(None, ge=1)
    write_paths: int = Field(0, ge=0, description="How many replica paths to serialise")


class FlowSettings(_Section):
    k: int = Field(..., ge=1, description="Scaling index; levels are scaled by kappa = k")
    levels: List[float] = Field(..., min_length=1)
    y0: List[float] = Field(..., description="Target staircase Y0(q) at the levels")
    horizon: float = Field(..., gt=0)
    t_list: List[float] = Field(..., min_length=1)
    s_points: List[float] = Field(default_factory=lambda: [0.2, 0.5, 0.8])
    marginal_level: int = Field(-1, description="Level index for the marginal test")
    replicas: Optional[int] = Field(None, ge=1)
    write_paths: int = Field(0, ge=0)
    trajectory_times: List[float] = Field(default_factory=list)


class FunctionSpec(_Section):
    kind: Literal["step", "smooth"]
    levels: List[float] = Field(default_factory=list)
    coefficients: List[float] = Field(default_factory=list)
    name: Optional[Literal["x", "exp(-x)", "1"]] = None

    @model_validator(mode="after")
    def _consistent(self) -> "FunctionSpec":
        if self.kind == "step":
            if not self.levels or len(self.levels) != len(self.coefficients):
                raise ValueError("step functions need matching levels and coefficients")
        elif self.name is None:
            raise ValueError("smooth functions need a name")
        return self


class OdeSettings(_Section):
    probs: List[float] = Field(default_factory=lambda: [0.5, 0.0, 0.5])
    sigma: float = Field(1.0, gt=0)
    s0_list: List[float] = Field(default_factory=lambda: [0.0])
    lambdas: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    t_list: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    f_specs: List[FunctionSpec] = Field(default_factory=list)


class ConvergeSettings(_Section):
    k_list: List[int] = Field(..., min_length=1)
    levels: List[float] = Field(..., min_length=1)
    y0: List[float] = Field(...)
    t_list: List[float] = Field(..., min_length=1)
    f_specs: List[FunctionSpec] = Field(..., min_length=1)
    replicas: Optional[int] = Field(None, ge=1)
    slack_constant: float = Field(2.0, ge=0, description="C in the C/k prelimit slack")
    pilot_replicas: int = Field(0, ge=0, description="Calibrate C from a pilot run if > 0")
    martingale: bool = Field(False, description="Also estimate the martingale residual")
    martingale_f: Literal["x", "exp(-x)", "1"] = "x"


class ExperimentConfig(_Section):
    run: RunSettings
    family: FamilySettings
    solver: SolverSettings = Field(default_factory=SolverSettings)
    mech: Optional[MechSettings] = None
    simulate: Optional[SimulateSettings] = None
    flow: Optional[FlowSettings] = None
    ode: Optional[OdeSettings] = None
    converge: Optional[ConvergeSettings] = None

    def canonical_json(self) -> str:
        data = self.model_dump(mode="json")
        for section, key in _HASH_EXCLUDED:
            data.get(section, {}).pop(key, None)
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def with_overrides(
        self,
        master_seed: Optional[int] = None,
        replicas: Optional[int] = None,
        workers: Optional[int] = None,
        output_dir: Optional[str] = None,
    ) -> "ExperimentConfig":
        """Apply command-line overrides; the output directory falls back to
        the BRANCHFLOW_OUTPUT_DIR environment variable."""
        run_update = {}
        if master_seed is not None:
            run_update["master_seed"] = master_seed
        if replicas is not None:
            run_update["replicas"] = replicas
        if workers is not None:
            run_update["workers"] = workers
        if output_dir is None:
            output_dir = os.environ.get(OUTPUT_DIR_ENV)
        if output_dir:
            run_update["output_dir"] = output_dir
        if not run_update:
            return self
        try:
            run = RunSettings(**{**self.run.model_dump(), **run_update})
        except ValidationError as e:
            raise ConfigError(f"Invalid override: {e}")
        return self.model_copy(update={"run": run})

    def replicas_for(self, section: Optional[BaseModel]) -> int:
        own = getattr(section, "replicas", None) if section is not None else None
        return own if own is not None else self.run.replicas

    @property
    def worker_count(self) -> int:
        return self.run.workers or os.cpu_count() or 1


def load_experiment_config(path) -> ExperimentConfig:
    """Load and validate an experiment config (TOML)."""
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"Config file not found: {config_path}")
    try:
        with config_path.open("rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Failed to parse {config_path}: {e}")
    try:
        return ExperimentConfig(**raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {config_path}: {e}")


class Config:
    _instance = None
    _lock = threading.Lock()
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if not self._initialized:
            with self._lock:
                if not self._initialized:
                    self._config = None
                    self._load_initial_config()
                    self._initialized = True

    @staticmethod
    def config_path() -> Path:
        root = PROJECT_ROOT
        config_path = root / "config" / "config.toml"
        if config_path.exists():
            return config_path
        example_path = root / "config" / "config.example.toml"
        if example_path.exists():
            return example_path
        raise ConfigError("No configuration file found in config directory")

    def _load_initial_config(self):
        try:
            self._config = load_experiment_config(self.config_path())
        except ConfigError:
            # library use without a config file falls back to built-in solver defaults
            self._config = None

    @property
    def experiment(self) -> Optional[ExperimentConfig]:
        return self._config

    @property
    def solver(self) -> SolverSettings:
        if self._config is None:
            return SolverSettings()
        return self._config.solver


config = Config()
