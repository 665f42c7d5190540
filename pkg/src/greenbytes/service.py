"""Read-only HTTP inference service over a loaded model.

Endpoints:

* ``POST /predict`` with ``{"window": [[...feature rows...]]}`` (raw units)
  returns ``{"predicted_kwh": ..., "model_kind": ..., "format_version": ...}``
* ``GET /health`` liveness probe
* ``GET /importance`` feature importances (boosted-tree models only; 404 otherwise)
* ``GET /model`` training metadata

Malformed request bodies yield 400; well-formed windows of the wrong shape
yield 422. The model is immutable once loaded; swapping models means
restarting the process, which keeps concurrent requests trivially safe.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .errors import ShapeError, ValidationError
from .model_io import FORMAT_VERSION, EnergyModel, load_model


def _parse_window(body: bytes):
    """Returns (array, error_status, error_message); array is None on error."""
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        return None, 400, f"request body is not valid JSON: {exc}"
    if not isinstance(doc, dict) or "window" not in doc:
        return None, 400, 'request body must be a JSON object with a "window" field'
    window = doc["window"]
    if not isinstance(window, list) or not window or not all(isinstance(r, list) for r in window):
        return None, 400, '"window" must be a non-empty list of feature rows'
    try:
        arr = np.asarray(window, dtype=float)
    except (TypeError, ValueError):
        return None, 400, '"window" rows must be equal-length lists of numbers'
    if arr.ndim != 2:
        return None, 400, '"window" rows must be equal-length lists of numbers'
    return arr, None, None


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def model(self) -> EnergyModel:
        return self.server.model  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _reply(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._reply(200, {"status": "ok"})
        elif self.path == "/importance":
            if self.model.kind != "gbt":
                self._reply(404, {"error": "feature importances are only available for gbt models"})
                return
            est = self.model.estimator
            named = {
                name: float(v)
                for name, v in zip(self.model.feature_names, est.feature_importances_)
            }
            self._reply(200, {"importances": named, "no_splits": bool(est.no_splits_)})
        elif self.path == "/model":
            self._reply(200, dict(self.model.metadata))
        else:
            self._reply(404, {"error": f"no such endpoint: {self.path}"})

    def do_POST(self):
        if self.path != "/predict":
            self._reply(404, {"error": f"no such endpoint: {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = 0
        window, status, message = _parse_window(self.rfile.read(length))
        if window is None:
            self._reply(status, {"error": message})
            return
        try:
            predicted = self.model.predict_window(window)
        except (ShapeError, ValidationError) as exc:
            self._reply(422, {"error": str(exc)})
            return
        self._reply(200, {
            "predicted_kwh": predicted,
            "model_kind": self.model.kind,
            "format_version": FORMAT_VERSION,
        })


class PredictionServer:
    """Thin wrapper around ThreadingHTTPServer bound to one immutable model."""

    def __init__(self, model: EnergyModel, host: str = "127.0.0.1", port: int = 0):
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.model = model  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> None:
        """Serve on a background thread (for tests and embedding)."""
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None


def serve(model_path: str | Path, host: str = "127.0.0.1", port: int = 8337) -> None:
    """Load a model file and serve it until interrupted."""
    server = PredictionServer(load_model(model_path), host=host, port=port)
    print(f"serving {Path(model_path).name} on http://{host}:{server.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
