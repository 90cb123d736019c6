"""Database session management."""

import logging
from typing import Any, Dict, Generator, Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker

from app.core.config import settings
from app.db.models import Base, LabRun

logger = logging.getLogger(__name__)

engine = create_engine(
    settings.database_url,
    echo=settings.db_echo,
    connect_args={"check_same_thread": False},
)

SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def get_db() -> Generator[Session, None, None]:
    """Get database session."""
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


def record_run(
    experiment: str,
    params: Optional[Dict[str, Any]],
    response: Optional[Dict[str, Any]],
    duration_ms: int,
    source: str,
) -> Optional[int]:
    """Append one run to the ledger; failures are logged, never raised."""
    response = response or {}
    metadata = response.get("metadata") or {}
    data = response.get("data") or {}
    status = response.get("status", "error")
    db = SessionLocal()
    try:
        Base.metadata.create_all(bind=engine)
        run = LabRun(
            experiment=experiment,
            params=params,
            response=response,
            status=status,
            passed=status == "ok",
            exit_code=metadata.get("exit_code"),
            duration_ms=duration_ms,
            run_dir=metadata.get("run_dir"),
            error_message=data.get("error") if status == "error" else None,
            source=source,
        )
        db.add(run)
        db.commit()
        logger.info(f"Recorded run of {experiment} (status={status}, duration={duration_ms}ms, source={source})")
        return run.id
    except Exception as e:
        logger.error(f"Database logging failed: {e}", exc_info=True)
        db.rollback()
        return None
    finally:
        db.close()
