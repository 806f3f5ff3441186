import logging
import os
import sys
from logging.handlers import RotatingFileHandler

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

def setup_logging():
    """
    Set up logging configuration for the planner, harness and CLI.
    Safe to call more than once; handlers are only attached the first time.
    """
    # Get log level from environment variable
    log_level = os.getenv('LOG_LEVEL', 'INFO').upper()
    root = logging.getLogger()

    if not getattr(root, '_cbmcts_configured', False):
        logging.basicConfig(
            level=getattr(logging, log_level, logging.INFO),
            format=LOG_FORMAT,
            handlers=[
                # Console handler with detailed formatting
                logging.StreamHandler(sys.stdout)
            ]
        )

        # Add file handler if not in production
        if os.getenv('ENVIRONMENT') != 'production':
            log_dir = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'logs')
            os.makedirs(log_dir, exist_ok=True)
            file_handler = RotatingFileHandler(
                os.path.join(log_dir, 'cbmcts.log'),
                maxBytes=10*1024*1024,  # 10MB
                backupCount=5
            )
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            root.addHandler(file_handler)

        root._cbmcts_configured = True

    # Set log levels for third-party libraries
    logging.getLogger('sqlalchemy').setLevel(logging.WARNING)

    logger = logging.getLogger('app')
    logger.debug('Logging setup completed')
    return logger
