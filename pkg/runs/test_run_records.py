from datetime import datetime, timedelta, timezone

import pytest
from pydantic import ValidationError
from sqlmodel import Session, SQLModel, create_engine
from sqlmodel.pool import StaticPool

from db import get_session
from runs.run_records import RunRecordCreate, RunRecordPublic, read_runs, record_run


@pytest.fixture(name='engine')
def engine_fixture():
    engine = create_engine('sqlite://', connect_args={'check_same_thread': False},
                           poolclass=StaticPool)
    SQLModel.metadata.create_all(engine)
    return engine


@pytest.fixture(name='session')
def session_fixture(engine):
    with Session(engine) as session:
        yield session


def _record(status: str = 'Certified', **fields) -> RunRecordCreate:
    values = {'subcommand': 'solve', 'criterion': 'A', 'n': 31, 'm': 3, 'run_budget': 5, 'status': status,
              'criterion_value': 2.5, 'nodes': 120, 'seed': 0, 'wall_time': 1.5}
    values.update(fields)
    return RunRecordCreate.from_counts([1, 0, 2], **values)


def test_record_run(session: Session):
    stored = record_run(session, _record())
    assert stored.id
    assert stored.counts == [1, 0, 2]
    assert stored.created_at is not None
    public = RunRecordPublic.model_validate(stored)
    assert public.status == 'Certified'


def test_read_runs_newest_first(session: Session):
    start = datetime(2024, 1, 1, tzinfo=timezone.utc)
    for offset, status in enumerate(['Certified', 'TimeLimit', 'Infeasible']):
        record_run(session, _record(status), created_at=start + timedelta(minutes=offset))
    runs = read_runs(session)
    assert [run.status for run in runs] == ['Infeasible', 'TimeLimit', 'Certified']
    assert [run.status for run in read_runs(session, limit=2)] == ['Infeasible', 'TimeLimit']


def test_read_runs_rejects_non_positive_limit(session: Session):
    with pytest.raises(ValueError):
        read_runs(session, limit=0)


def test_invalid_record():
    with pytest.raises(ValidationError):
        _record(n=0)
    with pytest.raises(ValidationError):
        _record(subcommand='')


def test_get_session_creates_tables(engine):
    SQLModel.metadata.drop_all(engine)
    with get_session(engine) as session:
        record_run(session, _record())
        assert len(read_runs(session)) == 1
