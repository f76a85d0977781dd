# utils/__init__.py - Effect sizes, pooling estimators, synthetic data and reporting
