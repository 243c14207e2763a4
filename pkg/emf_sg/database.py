"""
Database configuration and session management for the run registry.
"""
from typing import Iterator

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import Session, sessionmaker

Base = declarative_base()


def make_engine(url: str) -> Engine:
    """Engine for a registry URL (e.g. sqlite:///runs.db)."""
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


def make_session_factory(engine: Engine) -> sessionmaker:
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def get_session(factory: sessionmaker) -> Iterator[Session]:
    """Yield a session and close it afterwards."""
    db = factory()
    try:
        yield db
    finally:
        db.close()


def create_tables(engine: Engine) -> None:
    """Create all tables defined in models."""
    from . import models  # noqa: F401  registers the tables on Base
    Base.metadata.create_all(bind=engine)
