import logging
from logging.config import dictConfig

from app.core.config import settings


def setup_logging(level: str | None = None) -> None:
    """Configure console logging for the API, the CLI and experiment runs."""

    dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {
                "default": {
                    "format": "%(asctime)s | %(levelname)s | %(name)s | %(message)s",
                }
            },
            "handlers": {
                "console": {
                    "class": "logging.StreamHandler",
                    "formatter": "default",
                    "stream": "ext://sys.stderr",
                }
            },
            "root": {
                "level": level or settings.log_level,
                "handlers": ["console"],
            },
        }
    )
    logging.captureWarnings(True)


setup_logging()
