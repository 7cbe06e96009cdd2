"""
Validated settings for the simulator and the on-disk workspace.
"""
from __future__ import annotations

import os
import typing
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from notaria.exceptions import InvalidConfig
from notaria.ledger import DEFAULT_BLOCK_INTERVAL
from notaria.nodes import DEFAULT_CLOCK_SKEW

__all__ = ["SimConfig", "WorkspaceSettings", "load_config", "WORKSPACE_ENV"]

WORKSPACE_ENV = "NOTARIA_WORKSPACE"
DEFAULT_WORKSPACE = "notaria-workspace"


class SimConfig(BaseModel):
    """
    Every knob of one simulated run. Times are integer milliseconds of
    simulated time.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: str = "happy_path"
    seed: int = 0
    num_clients: int = Field(2, ge=1)
    num_nodes: int = Field(1, ge=1)
    txs_per_client: int = Field(1, ge=1)
    block_interval_ms: int = Field(5_000, gt=0)
    m: int = Field(3, ge=2)
    public_block_interval_ms: int = Field(DEFAULT_BLOCK_INTERVAL, gt=0)
    start_time_ms: int = Field(1_700_000_000_000, gt=0)

    message_delay_ms: int = Field(10, ge=1)
    delay_jitter_ms: int = Field(0, ge=0)
    drop_rate: float = Field(0.0, ge=0.0, lt=1.0)

    first_receipt_timeout_ms: int = Field(1_000, gt=0)
    receipt_timeout_intervals: int = Field(2, ge=1)
    max_retries: int = Field(3, ge=0)
    clock_skew_ms: int = Field(DEFAULT_CLOCK_SKEW, ge=0)
    quorum: float = Field(1.0, gt=0.0, le=1.0)
    skip_empty_intervals: bool = True

    rewrite_block: typing.Optional[int] = Field(None, ge=1)
    rewrite_frequency: int = Field(1, ge=1)
    forgery_attempts: int = Field(1_000, ge=0)
    max_intervals: int = Field(200, ge=1)

    def __init__(self, **values: typing.Any) -> None:
        try:
            super().__init__(**values)
        except ValidationError as exception:
            raise InvalidConfig(str(exception)) from exception

    @model_validator(mode="after")
    def _check_timing(self) -> "SimConfig":
        worst_delay = self.message_delay_ms + self.delay_jitter_ms
        if 16 * worst_delay >= self.block_interval_ms:
            raise ValueError("message delay must stay well below the block interval")
        if 4 * worst_delay >= self.first_receipt_timeout_ms:
            raise ValueError("first receipt timeout shorter than a round trip")
        return self

    @property
    def guard_ms(self) -> int:
        """
        Distance kept between a submission and the next block boundary.
        """
        return 4 * (self.message_delay_ms + self.delay_jitter_ms) + 1


def load_config(
    file_values: typing.Optional[typing.Mapping[str, typing.Any]] = None,
    **overrides: typing.Any,
) -> SimConfig:
    """
    Merge a config file's values with explicit overrides (overrides win,
    `None` means "not given") and validate the result.
    """
    values = dict(file_values or {})
    values.update({key: value for key, value in overrides.items() if value is not None})
    return SimConfig(**values)


class WorkspaceSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    directory: Path

    @classmethod
    def resolve(
        cls, explicit: typing.Optional[typing.Union[str, Path]] = None
    ) -> "WorkspaceSettings":
        directory = explicit or os.environ.get(WORKSPACE_ENV) or DEFAULT_WORKSPACE
        return cls(directory=Path(directory))
