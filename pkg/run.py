# run.py - API entry point
import logging

from app import app
from config import Config

if __name__ == '__main__':
    logging.basicConfig(level=Config.LOG_LEVEL)
    app.run(debug=True, host='127.0.0.1', port=5000)
