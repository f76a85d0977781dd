# app.py - Flask application exposing the pooling library as a JSON API
import logging

from flask import Flask, jsonify
from flask_cors import CORS

from config import Config
from models.errors import ReferendumError

logger = logging.getLogger(__name__)


def create_app(config_object=Config):
    app = Flask(__name__, template_folder=config_object.TEMPLATE_DIR)
    app.config.from_object(config_object)

    # Local tooling only
    CORS(app, origins=[
        "http://localhost:3000",
        "http://127.0.0.1:3000",
        "http://localhost:5000",
        "http://127.0.0.1:5000",
    ])

    from routes.analysis import analysis_bp
    app.register_blueprint(analysis_bp, url_prefix='/api')

    @app.errorhandler(ReferendumError)
    def handle_referendum_error(error):
        logger.info('request rejected: %s', error.message)
        return jsonify(error.to_dict()), error.http_status

    @app.route('/api/health')
    def health():
        return jsonify({'status': 'ok'})

    return app


# Create the application instance
app = create_app()

if __name__ == '__main__':
    app.run(debug=True, host='127.0.0.1', port=5000)
