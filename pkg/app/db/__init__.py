"""Run ledger for the symplectic lab."""

from app.db.models import Base, LabRun
from app.db.session import SessionLocal, engine, get_db, record_run

__all__ = [
    "engine",
    "SessionLocal",
    "get_db",
    "record_run",
    "Base",
    "LabRun",
]
