# Hurry-up utils package

# data_manager imports the MongoDB mirror only when DATABASE_URL is set
__all__ = []
