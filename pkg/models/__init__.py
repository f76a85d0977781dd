# models/__init__.py - Referendum records, ingest/aggregation and the error hierarchy
