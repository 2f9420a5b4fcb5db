import os
import json
import hashlib
import logging

import numpy as np


def dataset_key(S, n) -> str:
    """Content hash of a covariance matrix and its sample count."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(S, dtype=float).tobytes())
    digest.update(str(int(n)).encode())
    return digest.hexdigest()[:32]


class CachedScores:
    def __init__(self, path):
        self.path = path
        self.is_dirty = False
        self.meta = self.load_meta()

    def load_meta(self):
        mpath = self.path.replace(".json", ".meta")
        if os.path.isfile(mpath):
            with open(mpath, 'rt') as f:
                return json.loads(f.read())
        return {}

    def save_meta(self):
        if not self.is_dirty:
            return
        mpath = self.path.replace(".json", ".meta")
        os.makedirs(os.path.dirname(mpath), exist_ok=True)
        with open(mpath, 'wt') as f:
            f.write(json.dumps(self.meta, sort_keys=True))
        self.is_dirty = False

    def exists(self):
        return os.path.isfile(self.path)

    def __bool__(self):
        return self.exists()

    def update_meta(self, values):
        self.meta.update(values)
        self.is_dirty = True

    @property
    def parent_graphs(self):
        from .score import ParentGraph
        with open(self.path, 'rt') as f:
            return [ParentGraph.from_dict(entry) for entry in json.load(f)]

    @parent_graphs.setter
    def parent_graphs(self, pgs):
        with open(self.path, 'wt') as f:
            json.dump([pg.to_dict() for pg in pgs], f)


class ScoreCache:
    def __init__(self, config):
        self.cache_dir = config.get('score_cache_dir', '/tmp/causal_search_cache')

    def has(self, dataset, constraints) -> CachedScores:
        path = os.path.join(self.cache_dir, dataset, constraints + ".json")
        entry = CachedScores(path)
        logging.debug(f"Score cache lookup for {dataset}/{constraints}: {'HIT' if entry.exists() else 'MISS'}")
        return entry

    def add(self, dataset, constraints, pgs, meta=None) -> CachedScores:
        entry = self.has(dataset, constraints)
        os.makedirs(os.path.dirname(entry.path), exist_ok=True)
        entry.parent_graphs = pgs
        entry.update_meta(meta or {})
        entry.save_meta()
        logging.debug(f"Cached {len(pgs)} parent graphs at {entry.path}")
        return entry
