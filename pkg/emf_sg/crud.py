"""
CRUD operations for the run registry.
"""
import json
import logging
from typing import List

from sqlalchemy.orm import Session

from . import models
from .schemas import RunManifest

logger = logging.getLogger(__name__)


def get_or_create_run(db: Session, manifest: RunManifest) -> models.Run:
    """
    Retrieve the run recorded for this manifest, or create it.
    A rerun with an identical manifest refreshes the wall time only.
    """
    digest = manifest.digest()
    run = db.query(models.Run).filter(models.Run.manifest_hash == digest).first()
    if run:
        run.wall_time_s = manifest.wall_time_s
    else:
        run = models.Run(
            manifest_hash=digest,
            command=manifest.command,
            config_path=manifest.config_path,
            seed=manifest.seed,
            params_json=json.dumps(manifest.params, sort_keys=True, default=str),
            versions_json=json.dumps(manifest.versions, sort_keys=True),
            wall_time_s=manifest.wall_time_s,
        )
        db.add(run)
    db.commit()
    db.refresh(run)
    return run


def record_output(db: Session, run: models.Run, path: str, n_rows: int) -> models.RunOutput:
    """
    Attach an output file to a run. If the run already lists the same path,
    its row count is updated in place.
    """
    existing = db.query(models.RunOutput).filter(
        models.RunOutput.run_id == run.id,
        models.RunOutput.path == path
    ).first()
    if existing:
        existing.n_rows = n_rows
        output = existing
    else:
        output = models.RunOutput(run_id=run.id, path=path, n_rows=n_rows)
        db.add(output)
    db.commit()
    db.refresh(output)
    logger.info(f"Recorded {n_rows} rows of {path} under run {run.manifest_hash[:12]}")
    return output


def list_runs(db: Session, limit: int = 20) -> List[models.Run]:
    """Most recent runs first."""
    return db.query(models.Run).order_by(models.Run.id.desc()).limit(limit).all()


def run_exists(db: Session, manifest_hash: str) -> bool:
    """Check if a run with the given manifest digest exists."""
    return db.query(models.Run).filter(models.Run.manifest_hash == manifest_hash).first() is not None
