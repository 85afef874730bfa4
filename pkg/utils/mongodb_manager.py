"""
MongoDB run store for the Hurry-up simulator
Mirrors run reports, keyed by trace digest, and policy comparisons into a
MongoDB database.
"""

import logging
import os
from datetime import datetime
from typing import Any, Dict, Optional

from pymongo import MongoClient

logger = logging.getLogger(__name__)


class MongoRunStore:
    """MongoDB-backed store of simulation results"""

    def __init__(self, database_url: Optional[str] = None, database_name: str = "hurryup"):
        self.database_url = database_url or os.getenv('DATABASE_URL')
        if not self.database_url:
            raise ValueError("DATABASE_URL environment variable is required")

        self.database_name = database_name
        self.client = None
        self.db = None
        self.connect_to_database()

    def connect_to_database(self):
        """Establish connection to MongoDB"""
        try:
            self.client = MongoClient(self.database_url)
            self.db = self.client[self.database_name]

            # Test connection
            self.client.admin.command('ping')
            logger.info("Successfully connected to MongoDB")

            self.create_indexes()

        except Exception as e:
            logger.error(f"Failed to connect to MongoDB: {e}")
            raise

    def create_indexes(self):
        try:
            self.db.runs.create_index([("run_id", 1)], unique=True)
            self.db.runs.create_index([("policy", 1), ("qps", 1)])
            self.db.runs.create_index([("created_at", -1)])
            self.db.comparisons.create_index([("created_at", -1)])
            logger.info("Database indexes created successfully")
        except Exception as e:
            logger.error(f"Error creating indexes: {e}")

    def close_connection(self):
        if self.client:
            self.client.close()

    def store_run(self, run_id: str, run_name: str, config: Dict[str, Any], report: Dict[str, Any]) -> str:
        """Upsert one run's config and report under its trace digest"""
        run_doc = {
            'run_id': run_id,
            'run_name': run_name,
            'policy': config.get('policy'),
            'qps': config.get('qps'),
            'config': config,
            'report': report,
            'created_at': datetime.now(),
        }
        try:
            self.db.runs.replace_one({'run_id': run_id}, run_doc, upsert=True)
            logger.info(f"Stored run {run_name} ({run_id})")
            return run_id
        except Exception as e:
            logger.error(f"Error storing run {run_name}: {e}")
            raise

    def store_comparison(self, name: str, comparison: Dict[str, Any]) -> bool:
        try:
            self.db.comparisons.insert_one({'name': name, **comparison, 'created_at': datetime.now()})
            return True
        except Exception as e:
            logger.error(f"Error storing comparison {name}: {e}")
            return False
