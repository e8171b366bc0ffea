from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field


class SolverConfig(BaseModel):
    """
    Every knob of the hybrid solver. Values come from config.yaml and can be
    overridden from the command line with with_overrides().
    """
    model_config = ConfigDict(extra="forbid")

    mode: Literal["hybrid", "ip", "cp"] = "hybrid"
    cut_mode: Literal["none", "standard", "all"] = "all"
    cut_placement: Literal["root", "every_node"] = "root"
    cut_rounds: int = Field(5, ge=0)
    cuts_per_round: int = Field(20, ge=0)
    cuts_per_node: int = Field(50, ge=0)
    lift_targets: int = Field(10, ge=0)
    mic_candidates: int = Field(5, ge=0)
    four_cycle_candidates: Optional[int] = Field(40, ge=0)

    branching: Literal["most_fractional"] = "most_fractional"
    node_selection: Literal["depth_then_best", "depth_first", "best_bound"] = "depth_then_best"
    integrality_tol: float = Field(1e-6, gt=0)
    violation_tol: float = Field(1e-4, gt=0)
    time_limit: Optional[float] = Field(None, gt=0)  # seconds
    node_limit: Optional[int] = Field(None, ge=0)

    rounding: bool = True
    rounding_nodes: int = Field(10_000, ge=0)
    rounding_ms: float = Field(200.0, ge=0)
    node_propagation: bool = True

    objective: Literal["outer_loop", "station_cost"] = "outer_loop"
    reduce: bool = True
    reduction_passes: int = Field(3, ge=0)
    reduction_cuts: Literal["every_lp", "initial_lp"] = "every_lp"

    @classmethod
    def from_yaml(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        return cls.model_validate(data)

    def with_overrides(self, **overrides):
        # None means "flag not given"
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return SolverConfig.model_validate(data)
