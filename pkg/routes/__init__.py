# routes/__init__.py - JSON API blueprints
