import logging

_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def configure_logging(verbose: bool = False) -> None:
    """
    Configures the root logger once for command line use. Library code only
    ever asks for loggers through get_logger.
    :param verbose: DEBUG level if True, INFO otherwise.
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=_FORMAT,
        force=True
    )
    # httpx logs every request at INFO, which drowns the progress output
    logging.getLogger("httpx").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
