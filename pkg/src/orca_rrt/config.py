"""
Benchmark configuration files.
"""

import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from .exceptions import FileLoadError
from .orca import SimParams
from .planner import PlannerParams

try:
    import yaml
except ImportError as e:
    raise ImportError(
        "PyYAML is required for configuration files. Install with: pip install PyYAML"
    ) from e

ALGORITHM_NAMES = ("orca", "line-rrt", "vg-rrt", "orca-rrt")


@dataclass(frozen=True)
class BenchmarkConfig:
    """
    One benchmark sweep.

    Every (environment, agent count, radius) cell gets ``instances_per_cell``
    generated instances. ORCA runs once per instance; each RRT* algorithm
    runs ``seeds_per_instance`` times. A threshold of None means "any
    solution counts". ``rank_cutoffs`` adds rank histograms of the results
    as they stood that many seconds into each run.
    """

    environments: Tuple[str, ...] = ("empty", "door", "cross", "maze")
    agent_counts: Tuple[int, ...] = tuple(range(2, 11))
    radii: Tuple[float, ...] = (50.0, 60.0, 70.0, 80.0, 90.0, 100.0)
    instances_per_cell: int = 10
    seeds_per_instance: int = 5
    budget: Optional[float] = 5.0
    iterations: Optional[int] = None
    thresholds: Tuple[Optional[float], ...] = (None, 5.0, 2.5)
    rank_cutoffs: Tuple[float, ...] = ()
    algorithms: Tuple[str, ...] = ALGORITHM_NAMES
    seed: int = 0
    workers: int = 1
    sim: Dict[str, Any] = field(default_factory=dict)
    planner: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "environments",
            "agent_counts",
            "radii",
            "thresholds",
            "rank_cutoffs",
            "algorithms",
        ):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            FileLoadError: Naming the first offending key.
        """
        if not self.environments:
            raise FileLoadError("Config key 'environments' must not be empty")
        if not self.agent_counts or any(int(n) != n or n < 1 for n in self.agent_counts):
            raise FileLoadError("Config key 'agent_counts' must list positive integers")
        if not self.radii or any(not r > 0 for r in self.radii):
            raise FileLoadError("Config key 'radii' must list positive numbers")
        if self.instances_per_cell < 1:
            raise FileLoadError("Config key 'instances_per_cell' must be positive")
        if self.seeds_per_instance < 1:
            raise FileLoadError("Config key 'seeds_per_instance' must be positive")
        if self.budget is None and self.iterations is None:
            raise FileLoadError("Config needs a 'budget' or an 'iterations' key")
        if self.budget is not None and not self.budget > 0:
            raise FileLoadError("Config key 'budget' must be positive")
        if self.iterations is not None and self.iterations < 1:
            raise FileLoadError("Config key 'iterations' must be positive")
        if any(t is not None and t < 1 for t in self.thresholds):
            raise FileLoadError("Config key 'thresholds' must hold values >= 1 or null")
        if any(c is None or not c > 0 for c in self.rank_cutoffs):
            raise FileLoadError("Config key 'rank_cutoffs' must list positive numbers")
        unknown = [a for a in self.algorithms if a not in ALGORITHM_NAMES]
        if unknown or not self.algorithms:
            raise FileLoadError(
                f"Config key 'algorithms' must be a subset of {', '.join(ALGORITHM_NAMES)}"
            )
        if self.workers < 1:
            raise FileLoadError("Config key 'workers' must be positive")
        try:
            self.sim_params()
        except ValueError as e:
            raise FileLoadError(f"Config key 'sim': {str(e)}") from e
        try:
            self.planner_params()
        except ValueError as e:
            raise FileLoadError(f"Config key 'planner': {str(e)}") from e

    def sim_params(self) -> SimParams:
        return SimParams.from_mapping(self.sim)

    def planner_params(self) -> PlannerParams:
        return PlannerParams.from_mapping(self.planner)

    def runs_per_instance(self) -> int:
        return sum(
            1 if algorithm == "orca" else self.seeds_per_instance for algorithm in self.algorithms
        )

    def cardinality(self) -> Tuple[int, int]:
        """
        Returns:
            tuple: (number of scenarios, number of runs)
        """
        scenarios = (
            len(self.environments)
            * len(self.agent_counts)
            * len(self.radii)
            * self.instances_per_cell
        )
        return scenarios, scenarios * self.runs_per_instance()

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "BenchmarkConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise FileLoadError(f"Unknown config key '{unknown[0]}'")
        values = dict(data)
        for key in ("sim", "planner"):
            if values.get(key) is None:
                values.pop(key, None)
            elif not isinstance(values[key], dict):
                raise FileLoadError(f"Config key '{key}' must be a mapping")
        try:
            return cls(**values)
        except TypeError as e:
            raise FileLoadError(f"Invalid config: {str(e)}") from e

    @classmethod
    def from_file(cls, file_path) -> "BenchmarkConfig":
        """
        Load a YAML benchmark config.

        Raises:
            FileLoadError: If the file is missing, unparsable or invalid
        """
        if not os.path.exists(file_path):
            raise FileLoadError(f"File '{file_path}' does not exist.")
        try:
            with open(file_path, encoding="utf-8") as handle:
                data = yaml.safe_load(handle)
        except yaml.YAMLError as e:
            raise FileLoadError(f"Error parsing YAML file '{file_path}': {str(e)}") from e
        if not isinstance(data, dict):
            raise FileLoadError(f"Invalid YAML format in '{file_path}': expected dictionary")
        return cls.from_mapping(data)
