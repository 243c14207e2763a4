"""
SQLAlchemy models of the run registry: one row per distinct run manifest,
plus the output files it produced.
"""
from sqlalchemy import TIMESTAMP, Column, Float, ForeignKey, Integer, String, Text, UniqueConstraint
from sqlalchemy.orm import relationship
from sqlalchemy.sql import func

from .database import Base


class Run(Base):
    """A CLI invocation, identified by its manifest digest."""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    manifest_hash = Column(String(64), unique=True, index=True, nullable=False)
    command = Column(String, nullable=False)
    config_path = Column(String, nullable=True)
    seed = Column(Integer, nullable=True)
    params_json = Column(Text, nullable=False)
    versions_json = Column(Text, nullable=False)
    wall_time_s = Column(Float, nullable=False, default=0.0)
    created_at = Column(TIMESTAMP, server_default=func.now())

    outputs = relationship("RunOutput", back_populates="run", cascade="all, delete-orphan")


class RunOutput(Base):
    """A file written by a run."""
    __tablename__ = "run_outputs"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    path = Column(String, nullable=False)
    n_rows = Column(Integer, nullable=False)
    created_at = Column(TIMESTAMP, server_default=func.now())

    run = relationship("Run", back_populates="outputs")

    __table_args__ = (
        UniqueConstraint('run_id', 'path', name='uix_run_path'),
    )
