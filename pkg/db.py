"""
This module handles the database of the run ledger.

The database URL comes from the OPTEX_DB_URL environment variable and
defaults to a SQLite file in the working directory. The engine is created
lazily so that commands which never touch the ledger never create the file.

Functions:
    database_url(): URL of the run ledger database.
    get_engine(): Shared engine of the run ledger.
    create_db_and_tables(): Creates the ledger tables if missing.
    get_session(): Opens a session on the ledger.
"""
import logging
import os
from contextlib import contextmanager
from functools import lru_cache

from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

logger = logging.getLogger(__name__)

DB_URL_ENV: str = 'OPTEX_DB_URL'
DEFAULT_DB_URL: str = 'sqlite:///optex_runs.db'


def database_url() -> str:
    return os.environ.get(DB_URL_ENV, DEFAULT_DB_URL)


@lru_cache(maxsize=None)
def _engine_for(url: str) -> Engine:
    connect_args = {'check_same_thread': False} if url.startswith('sqlite') else {}
    logger.debug('Opening run ledger at %s', url)
    return create_engine(url, connect_args=connect_args)


def get_engine() -> Engine:
    return _engine_for(database_url())


def create_db_and_tables(engine: Engine | None = None):
    """
    Create the ledger tables on the given engine, or on the configured one.
    """
    SQLModel.metadata.create_all(engine or get_engine())


@contextmanager
def get_session(engine: Engine | None = None):
    """
    Open a session on the ledger, creating its tables first.
    """
    engine = engine or get_engine()
    create_db_and_tables(engine)
    with Session(engine) as session:
        yield session
