from sqlalchemy import create_engine, Table, Column, Integer, String, Float, MetaData, inspect, select
from sqlalchemy.engine import Engine
from typing import Dict, List
from contextlib import contextmanager
import os
import re
from app.logger import setup_logging
from app.models import TrialRecord

# Set up logging
logger = setup_logging()

# One engine and metadata per database file
_engines: Dict[str, Engine] = {}
_metadata: Dict[str, MetaData] = {}

class DatabaseError(Exception):
    """Base exception for record store operations"""
    pass

def get_engine(db_path: str) -> Engine:
    """
    Return the engine for a SQLite file, creating the parent directory on first use.
    """
    db_path = os.path.abspath(db_path)
    if db_path not in _engines:
        os.makedirs(os.path.dirname(db_path), exist_ok=True)
        _engines[db_path] = create_engine(f"sqlite:///{db_path}", echo=False)
        _metadata[db_path] = MetaData()
    return _engines[db_path]

@contextmanager
def get_db_connection(db_path: str):
    """
    Context manager for database connections.
    Commits on success, rolls back and wraps the error otherwise.
    """
    connection = get_engine(db_path).connect()
    try:
        yield connection
        connection.commit()
    except Exception as e:
        connection.rollback()
        logger.error(f"Database operation failed: {str(e)}")
        raise DatabaseError(f"Database operation failed: {str(e)}")
    finally:
        connection.close()

def table_name_for(experiment: str) -> str:
    return "records_" + re.sub(r"[^0-9A-Za-z_]", "_", experiment)

def get_experiment_table(db_path: str, experiment: str, create: bool = True) -> Table:
    """
    Dynamically create or retrieve the records table of an experiment.

    :param db_path: SQLite file holding the records
    :param experiment: experiment name (used to form the table name)
    :param create: create the table when missing; otherwise a missing table is an error
    :return: SQLAlchemy Table object for the experiment
    :raises DatabaseError: If the table cannot be created or does not exist
    """
    try:
        engine = get_engine(db_path)
        metadata = _metadata[os.path.abspath(db_path)]
        table_name = table_name_for(experiment)
        if table_name in metadata.tables:
            return metadata.tables[table_name]

        if not inspect(engine).has_table(table_name):
            if not create:
                raise DatabaseError(f"No records for experiment {experiment} in {db_path}")
            experiment_table = Table(
                table_name, metadata,
                Column('id', Integer, primary_key=True, autoincrement=True),
                Column('env_id', String, nullable=False),
                Column('algorithm', String, nullable=False),
                Column('seed', Integer, nullable=False),
                Column('iteration', Integer, nullable=False),
                Column('simple_regret', Float, nullable=True),
                Column('joint_score', Float, nullable=False),
                Column('pr1', Integer, nullable=False),
                Column('pr2', Integer, nullable=False),
                Column('wallclock_ms', Integer, nullable=False)
            )
            metadata.create_all(engine, tables=[experiment_table])
            logger.info(f"Created new table: {table_name}")
        else:
            # If table exists, reflect its structure from the database
            experiment_table = Table(table_name, metadata, autoload_with=engine)
            logger.debug(f"Using existing table: {table_name}")

        return experiment_table
    except DatabaseError:
        raise
    except Exception as e:
        logger.error(f"Error creating/retrieving experiment table: {str(e)}")
        raise DatabaseError(f"Error creating/retrieving experiment table: {str(e)}")

def store_records(db_path: str, experiment: str, records: List[TrialRecord]):
    """
    Replace the stored records of an experiment.

    :raises DatabaseError: If there's any error during database operations
    """
    if not experiment:
        raise DatabaseError("Experiment name cannot be empty")
    experiment_table = get_experiment_table(db_path, experiment)

    with get_db_connection(db_path) as connection:
        # Insert all records in a single transaction
        connection.execute(experiment_table.delete())
        if records:
            connection.execute(experiment_table.insert(), [record.model_dump() for record in records])
        logger.info(f"Stored {len(records)} records for experiment {experiment}")

def load_records(db_path: str, experiment: str) -> List[TrialRecord]:
    """
    Read back an experiment's records in insertion order.

    :raises DatabaseError: If the database or the experiment table is missing
    """
    if not os.path.exists(db_path):
        raise DatabaseError(f"Record database not found: {db_path}")
    experiment_table = get_experiment_table(db_path, experiment, create=False)
    fields = list(TrialRecord.model_fields)

    with get_db_connection(db_path) as connection:
        rows = connection.execute(select(experiment_table).order_by(experiment_table.c.id)).mappings().all()
    return [TrialRecord(**{field: row[field] for field in fields}) for row in rows]

def list_experiments(db_path: str) -> List[str]:
    if not os.path.exists(db_path):
        raise DatabaseError(f"Record database not found: {db_path}")
    names = inspect(get_engine(db_path)).get_table_names()
    return sorted(name[len("records_"):] for name in names if name.startswith("records_"))
