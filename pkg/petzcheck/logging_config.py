import logging
import petzcheck.config as Config


def setup_logging(level: str | None = None) -> None:
    """
    Configure application-wide logging.

    This sets the root logger format and level and routes numpy/scipy
    runtime warnings through the logging system.

    Args:
        level (str | None): Overrides ``PETZCHECK_LOG_LEVEL`` when given.
    """

    logging.basicConfig(
        level=(level or Config.LOG_LEVEL).upper(),
        format="%(asctime)s [%(levelname)s] %(message)s",
    )

    # numpy RuntimeWarnings end up in the same stream as harness output
    logging.captureWarnings(True)
    logging.getLogger("py.warnings").setLevel(logging.WARNING)
