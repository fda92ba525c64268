"""In-process mock of a Perspective-style scoring endpoint for tests."""

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class MockPerspectiveServer:
    """Tiny HTTP server speaking the comment-analysis wire format.

    ``score_fn`` maps text -> score; ``status_script`` is a list of HTTP
    statuses forced onto the first len(script) requests (200 means answer
    normally).  Every request is appended to ``requests`` as
    (monotonic_time, text).
    """

    def __init__(self, score_fn=None, status_script=None):
        self.score_fn = score_fn or (lambda text: 0.42)
        self.status_script = list(status_script or [])
        self.requests = []
        self.lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length)) if length else {}
                text = body.get("comment", {}).get("text", "")
                with server.lock:
                    server.requests.append((time.monotonic(), text))
                    status = server.status_script.pop(0) if server.status_script else 200
                if status != 200:
                    payload = json.dumps({"error": {"code": status}}).encode()
                    self.send_response(status)
                else:
                    payload = json.dumps({
                        "attributeScores": {
                            "TOXICITY": {"summaryScore": {"value": server.score_fn(text)}}
                        }
                    }).encode()
                    self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        return f"http://127.0.0.1:{self.httpd.server_port}/v1/comments:analyze"

    @property
    def request_count(self):
        with self.lock:
            return len(self.requests)

    def request_times(self):
        with self.lock:
            return [t for t, _ in self.requests]

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        self.thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
