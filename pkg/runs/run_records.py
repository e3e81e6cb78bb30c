"""
This module defines the run ledger, a table of past solver runs.

Classes:
    RunRecordBase: Fields shared by every view of a run.
    RunRecord: Table model of a run.
    RunRecordPublic: Run as printed by the history command.
    RunRecordCreate: Run to be recorded.

Functions:
    record_run: Stores a run.
    read_runs: Most recent runs, newest first.
"""
import json
import logging
from collections.abc import Sequence
from datetime import datetime, timezone

from sqlmodel import Field, Session, SQLModel, col, select

import id_factory

logger = logging.getLogger(__name__)

DEFAULT_HISTORY_LIMIT: int = 20


class RunRecordBase(SQLModel):
    """
    Base class of a recorded run.

    Attributes:
        subcommand (str): CLI subcommand that produced the run.
        criterion (str): Criterion kind (A, I, MV, G or Custom).
        n (int): Number of candidate points.
        m (int): Number of parameters.
        run_budget (int): Number of trials N.
        status (str): Final status (Certified, TimeLimit, Infeasible, Heuristic or Complete).
        criterion_value (float | None): Criterion value of the reported design.
        design (str): Design counts as a JSON list.
        nodes (int | None): Branch-and-bound nodes, when a search ran.
        seed (int | None): Random seed of the heuristic.
        wall_time (float): Seconds spent.
    """
    subcommand: str = Field(min_length=1, index=True)
    criterion: str = Field(min_length=1)
    n: int = Field(gt=0)
    m: int = Field(gt=0)
    run_budget: int = Field(gt=0)
    status: str = Field(min_length=1)
    criterion_value: float | None = Field(default=None)
    design: str = Field(default='[]')
    nodes: int | None = Field(default=None, ge=0)
    seed: int | None = Field(default=None)
    wall_time: float = Field(default=0.0, ge=0)

    @property
    def counts(self) -> list[int]:
        return json.loads(self.design)


class RunRecord(RunRecordBase, table=True):
    """
    Table model of a recorded run.

    Attributes:
        id (str): Run ID.
        created_at (datetime): UTC time the run was recorded.
    """
    id: str | None = Field(default_factory=id_factory.generate_uuid, primary_key=True)
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc), index=True)


class RunRecordPublic(RunRecordBase):
    id: str
    created_at: datetime


class RunRecordCreate(RunRecordBase):
    """
    Run to be recorded; use from_counts to encode a design.
    """

    @classmethod
    def from_counts(cls, counts: Sequence[int] | None, **fields) -> 'RunRecordCreate':
        return cls(design=json.dumps([int(c) for c in counts or ()]), **fields)


def record_run(session: Session, record: RunRecordCreate, created_at: datetime | None = None) -> RunRecord:
    """
    Store a run in the ledger.

    Args:
        session (Session): Ledger session.
        record (RunRecordCreate): Run data.
        created_at (datetime | None): Recording time, now by default.

    Returns:
        RunRecord: The stored row.
    """
    db_record = RunRecord.model_validate(record)
    if created_at is not None:
        db_record.created_at = created_at
    session.add(db_record)
    session.commit()
    session.refresh(db_record)
    logger.info('Recorded %s run %s (status %s)', record.subcommand, db_record.id, record.status)
    return db_record


def read_runs(session: Session, limit: int = DEFAULT_HISTORY_LIMIT) -> list[RunRecord]:
    """
    Most recent runs, newest first.
    """
    if limit <= 0:
        raise ValueError('History limit must be positive')
    statement = select(RunRecord).order_by(col(RunRecord.created_at).desc()).limit(limit)
    return list(session.exec(statement).all())
