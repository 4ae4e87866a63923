import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest


class ScriptedServer:
    """Minimal HTTP server that replays a scripted list of responses.

    Each script entry is (status, body_bytes) or the string "drop" to close
    the connection without answering. Requests beyond the script repeat the
    last entry. Received request bodies and paths are recorded.
    """

    def __init__(self, script):
        self.script = list(script)
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                outer.requests.append((self.path, body))
                index = min(len(outer.requests) - 1, len(outer.script) - 1)
                entry = outer.script[index]
                if entry == "drop":
                    self.connection.close()
                    return
                status, payload = entry
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._httpd = HTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)


def label_body(names):
    doc = {"labels": [{"name": n, "rank": i + 1} for i, n in enumerate(names)]}
    return json.dumps(doc).encode()


@pytest.fixture
def scripted_server():
    return ScriptedServer
