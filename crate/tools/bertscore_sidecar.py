"""Scoring sidecar for `anomkit evaluate --backend bertscore`.

POST /score  {"pairs": [[hypothesis, reference], ...]}  ->  {"scores": [f1, ...]}

Scores are BERTScore F1 without baseline rescaling or IDF weighting.

    pip install bert-score
    python tools/bertscore_sidecar.py --port 8765
"""

import argparse
import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from threading import Lock

from bert_score import BERTScorer

log = logging.getLogger("bertscore_sidecar")


def make_handler(scorer, batch_size):
    lock = Lock()

    class Handler(BaseHTTPRequestHandler):
        def _reply(self, status, body):
            data = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            if self.path != "/score":
                return self._reply(404, {"error": f"no route {self.path}"})
            try:
                length = int(self.headers.get("Content-Length", 0))
                pairs = json.loads(self.rfile.read(length))["pairs"]
                hyps = [str(h) for h, _ in pairs]
                refs = [str(r) for _, r in pairs]
            except (ValueError, KeyError, TypeError) as e:
                return self._reply(400, {"error": f"bad request: {e}"})
            if not pairs:
                return self._reply(200, {"scores": []})
            with lock:
                _, _, f1 = scorer.score(hyps, refs, batch_size=batch_size)
            self._reply(200, {"scores": [float(x) for x in f1.tolist()]})

        def log_message(self, fmt, *args):
            log.debug(fmt, *args)

    return Handler


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8765)
    ap.add_argument("--model", default="distilbert-base-uncased")
    ap.add_argument("--device", default=None, help="cpu or cuda; auto when unset")
    ap.add_argument("--batch-size", type=int, default=64)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")

    scorer = BERTScorer(model_type=args.model, idf=False, rescale_with_baseline=False, device=args.device)
    server = ThreadingHTTPServer((args.host, args.port), make_handler(scorer, args.batch_size))
    log.info("scoring with %s on http://%s:%d/score", args.model, args.host, args.port)
    server.serve_forever()


if __name__ == "__main__":
    main()
