"""SQLAlchemy models for the lab run ledger."""

from sqlalchemy import JSON, TIMESTAMP, Boolean, Column, Index, Integer, String, Text
from sqlalchemy.orm import declarative_base
from sqlalchemy.sql import func

Base = declarative_base()


class LabRun(Base):
    """
    One executed experiment, whether triggered from the CLI or over HTTP.

    Keeps the parameters, the outcome and the run directory holding the
    artifacts, so that any report can be traced back to its inputs.
    """

    __tablename__ = "lab_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    timestamp = Column(TIMESTAMP(timezone=True), server_default=func.now(), nullable=False)
    experiment = Column(String(100), nullable=False)
    params = Column(JSON)
    response = Column(JSON)
    status = Column(String(20), nullable=False)  # 'ok', 'fail', 'error'
    passed = Column(Boolean)
    exit_code = Column(Integer)
    duration_ms = Column(Integer)
    run_dir = Column(Text)
    error_message = Column(Text)
    source = Column(String(20))  # 'cli', 'http'

    __table_args__ = (Index("idx_lab_runs_experiment", "experiment", "timestamp"),)

    def __repr__(self) -> str:
        return f"<LabRun(id={self.id}, experiment={self.experiment}, status={self.status})>"
