"""Source corpus ingestion, scene-by-array dataset construction and batch serving.

On-disk layout under ``root``::

    manifest.json
    sources/{split}/{source_id}.wav
    scenes/{scene_id}/{variant}/reference.wav       reference Ambisonics
    scenes/{scene_id}/{variant}/{array_id}.wav      array signals
    scenes/{scene_id}/{variant}/rir_reference.wav   [(N+1)**2 * S] channels
    scenes/{scene_id}/{variant}/rir_{array_id}.wav  [Q * S] channels
"""
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .array import D_MAX, D_MIN, ArrayGeometry, sample_geometry
from .dsp import EXCERPT_SECONDS, SAMPLE_RATE, read_wav, resample, stft, write_wav
from .errors import InputError
from .room import (ImpulseResponseSet, Scene, SceneConfig, array_rirs, convolve_sources, reference_ambisonic_rirs,
                   sample_scene)

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "eval")
VARIANTS = ("dry", "wet")
AUDIO_EXTENSIONS = (".wav",)


@dataclass(frozen=True)
class DatasetConfig:
    profile: str = "desk"
    train_scenes: int = 8
    train_arrays_per_scene: int = 4
    train_array_pool: int = 16
    val_scenes: int = 4
    val_arrays_per_scene: int = 2
    eval_scenes: int = 4
    eval_arrays_per_scene: int = 2
    source_counts: tuple = (1, 2)
    variants: tuple = VARIANTS
    n_mics: int = 5
    d_min: float = D_MIN
    d_max: float = D_MAX
    order: int = 1
    sample_rate: int = SAMPLE_RATE
    excerpt_seconds: float = EXCERPT_SECONDS
    source_dir: str | None = None
    synthetic_clips: int = 50
    synthetic_seconds: float = 5.0
    workers: int = 1

    @classmethod
    def paper(cls, **kw):
        base = dict(profile="paper", train_scenes=300, train_arrays_per_scene=1000, train_array_pool=10_000,
                    val_scenes=1000, val_arrays_per_scene=10, eval_scenes=1000, eval_arrays_per_scene=10)
        base.update(kw)
        return cls(**base)

    @classmethod
    def for_profile(cls, profile, **kw):
        if profile == "paper":
            return cls.paper(**kw)
        if profile == "desk":
            return cls(**kw)
        raise InputError(f"unknown profile {profile!r}")

    def to_dict(self):
        d = asdict(self)
        d["source_counts"] = list(self.source_counts)
        d["variants"] = list(self.variants)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("source_counts", "variants"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


# ---------------------------------------------------------------- sources

def _synthetic_clip(rng, n, fs):
    """Seeded noise bursts or a harmonic tone complex with an amplitude envelope."""
    t = np.arange(n) / fs
    if rng.random() < 0.5:
        x = np.zeros(n)
        for _ in range(rng.integers(2, 6)):
            start = rng.integers(0, n - fs // 10)
            length = rng.integers(fs // 10, fs)
            seg = rng.normal(size=min(length, n - start))
            # first-order colouring for spectral variety
            a = rng.uniform(-0.9, 0.9)
            for i in range(1, seg.size):
                seg[i] += a * seg[i - 1]
            seg *= np.hanning(seg.size)
            x[start:start + seg.size] += seg / (np.std(seg) + 1e-12)
    else:
        f0 = rng.uniform(80, 800)
        x = np.zeros(n)
        for h in range(1, int(min(20, 10_000 / f0)) + 1):
            vibrato = 1 + 0.002 * np.sin(2 * np.pi * 5 * t)
            x += rng.uniform(0.2, 1.0) / h * np.sin(2 * np.pi * h * f0 * t * vibrato + rng.uniform(0, 2 * np.pi))
        x *= 0.5 * (1 + np.sin(2 * np.pi * rng.uniform(0.2, 2) * t + rng.uniform(0, 2 * np.pi)))
        x += 0.05 * rng.normal(size=n)
    return rng.uniform(0.1, 0.5) * x / (np.max(np.abs(x)) + 1e-12)


def split_files(ids, seed):
    """Deterministic 80/10/10 partition of source ids."""
    ids = sorted(ids)
    perm = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(0.8 * len(ids)))
    n_val = int(round(0.1 * len(ids)))
    out = {"train": [], "val": [], "eval": []}
    for rank, i in enumerate(perm):
        split = "train" if rank < n_train else "val" if rank < n_train + n_val else "eval"
        out[split].append(ids[i])
    return {k: sorted(v) for k, v in out.items()}


def ingest_sources(root, source_dir=None, seed=0, target_fs=SAMPLE_RATE, n_synthetic=50, synthetic_seconds=5.0):
    """Index, resample and partition the source corpus into ``root/sources``.

    Falls back to a seeded synthetic corpus when ``source_dir`` is missing.

    Returns
    -------
    list of dict
        One record per clip: ``id``, ``path`` (relative to ``root``),
        ``split`` and ``n_samples``.
    """
    root = Path(root)
    clips = {}
    if source_dir is not None and Path(source_dir).is_dir():
        for p in sorted(Path(source_dir).rglob("*")):
            if p.suffix.lower() not in AUDIO_EXTENSIONS:
                continue
            try:
                x, fs = read_wav(p)
            except Exception as e:  # unreadable or unsupported encoding
                log.warning("skipping unreadable %s: %s", p, e)
                continue
            clips[p.stem] = resample(x.mean(axis=0), fs, target_fs)
        if not clips:
            raise InputError(f"no readable audio in {source_dir}")
    else:
        if source_dir is not None:
            log.warning("source directory %s missing, using synthetic clips", source_dir)
        if n_synthetic < 1:
            raise InputError("empty corpus and no synthetic fallback")
        n = int(synthetic_seconds * target_fs)
        for i in range(n_synthetic):
            clips[f"synth{i:04d}"] = _synthetic_clip(np.random.default_rng([seed, 1, i]), n, target_fs)
    splits = split_files(clips, seed)
    records = []
    for split in SPLITS:
        (root / "sources" / split).mkdir(parents=True, exist_ok=True)
        for cid in splits[split]:
            rel = f"sources/{split}/{cid}.wav"
            write_wav(root / rel, clips[cid], target_fs)
            records.append({"id": cid, "path": rel, "split": split, "n_samples": int(clips[cid].size)})
    return records


# ---------------------------------------------------------------- manifest

@dataclass
class DatasetManifest:
    config: dict
    seed: int
    sources: list
    scenes: list
    arrays: list
    pairings: list

    @property
    def profile(self):
        return self.config.get("profile", "desk")

    @property
    def splits(self):
        out = {s: [] for s in SPLITS}
        for r in self.sources:
            out[r["split"]].append(r["id"])
        return out

    def scene(self, scene_id):
        return self._index("scenes")[scene_id]

    def array(self, array_id):
        return self._index("arrays")[array_id]

    def _index(self, key):
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            cache[key] = {r["id"]: r for r in getattr(self, key)}
        return cache[key]

    def pairings_for(self, split):
        return [p for p in self.pairings if p["split"] == split]

    def to_json(self):
        d = {"config": self.config, "seed": self.seed, "splits": self.splits, "sources": self.sources,
             "scenes": self.scenes, "arrays": self.arrays, "pairings": self.pairings}
        return json.dumps(d, indent=1, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["config"], d["seed"], d["sources"], d["scenes"], d["arrays"], d["pairings"])

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def check(self):
        """Split disjointness and referential integrity."""
        seen = {}
        for r in self.sources:
            if seen.setdefault(r["id"], r["split"]) != r["split"]:
                raise InputError(f"source {r['id']} in two splits")
        scenes, arrays = self._index("scenes"), self._index("arrays")
        for p in self.pairings:
            if p["scene_id"] not in scenes or p["array_id"] not in arrays:
                raise InputError(f"pairing {p['id']} references a missing record")
        train_arrays = {p["array_id"] for p in self.pairings if p["split"] == "train"}
        other = {p["array_id"] for p in self.pairings if p["split"] != "train"}
        if train_arrays & other:
            raise InputError("evaluation arrays overlap training arrays")


def _content_hash(*parts):
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()[:16]


def _sample_arrays(rng, count, prefix, cfg):
    out = []
    for i in range(count):
        seed = int(rng.integers(2 ** 31))
        g = sample_geometry(np.random.default_rng(seed), cfg.n_mics, cfg.d_min, cfg.d_max)
        rec = replace(g, id=f"{prefix}{i:05d}", seed=seed).to_record(cfg.d_max)
        out.append(rec)
    return out


def plan_dataset(cfg, seed, sources):
    """Scene, array and pairing records without rendering anything."""
    rng = np.random.default_rng(seed)
    pools = {s: [r["id"] for r in sources if r["split"] == s] for s in SPLITS}
    length = {r["id"]: r["n_samples"] for r in sources}
    excerpt = int(cfg.excerpt_seconds * cfg.sample_rate)
    arrays = _sample_arrays(rng, cfg.train_array_pool, "atr", cfg)
    scenes, pairings = [], []
    plan = [("train", cfg.train_scenes, cfg.train_arrays_per_scene),
            ("val", cfg.val_scenes, cfg.val_arrays_per_scene),
            ("eval", cfg.eval_scenes, cfg.eval_arrays_per_scene)]
    for split, n_scenes, per_scene in plan:
        if n_scenes and not pools[split]:
            raise InputError(f"no source clips in the {split} split")
        if split == "train":
            if per_scene > len(arrays):
                raise InputError("array pool smaller than arrays per scene")
        else:
            split_arrays = _sample_arrays(rng, n_scenes * per_scene, f"a{split[0]}", cfg)
            arrays.extend(split_arrays)
        for i in range(n_scenes):
            n_src = cfg.source_counts[i % len(cfg.source_counts)]
            scene_seed = int(rng.integers(2 ** 31))
            scene = sample_scene(np.random.default_rng(scene_seed), SceneConfig(n_sources=n_src))
            sid = f"{split}{i:04d}"
            rec = replace(scene, id=sid, seed=scene_seed).to_record()
            srng = np.random.default_rng([seed, 2, len(scenes)])
            clips = [pools[split][j] for j in srng.choice(len(pools[split]), n_src, replace=n_src > len(pools[split]))]
            shortest = min(length[c] for c in clips)
            rec.update(split=split, n_sources=n_src, clips=clips,
                       excerpt_start=int(srng.integers(0, max(1, shortest - excerpt + 1))))
            scenes.append(rec)
            if split == "train":
                chosen = [arrays[j]["id"] for j in rng.choice(len(arrays), per_scene, replace=False)]
            else:
                chosen = [a["id"] for a in split_arrays[i * per_scene:(i + 1) * per_scene]]
            for aid in chosen:
                pairings.append({"id": f"{sid}_{aid}", "split": split, "scene_id": sid, "array_id": aid})
    for p in pairings:
        p["variants"] = {v: {"array": f"scenes/{p['scene_id']}/{v}/{p['array_id']}.wav",
                             "reference": f"scenes/{p['scene_id']}/{v}/reference.wav",
                             "rir_array": f"scenes/{p['scene_id']}/{v}/rir_{p['array_id']}.wav",
                             "rir_reference": f"scenes/{p['scene_id']}/{v}/rir_reference.wav"}
                         for v in cfg.variants}
    used = {p["array_id"] for p in pairings}
    arrays = [a for a in arrays if a["id"] in used]
    return DatasetManifest(cfg.to_dict(), int(seed), sources, scenes, arrays, pairings)


def variant_scene(scene_rec, variant):
    scene = Scene.from_record(scene_rec)
    return scene.as_dry() if variant == "dry" else scene


def _rir_to_channels(rirs):
    c, s, t = rirs.responses.shape
    return rirs.responses.reshape(c * s, t)


def rir_from_channels(data, n_sources, fs=SAMPLE_RATE):
    return ImpulseResponseSet(data.reshape(-1, n_sources, data.shape[-1]), fs)


class SourceBank:
    """Lazily loaded source clips keyed by id."""

    def __init__(self, root, sources):
        self.root = Path(root)
        self.records = {r["id"]: r for r in sources}
        self._clips = {}

    def __getitem__(self, cid):
        if cid not in self._clips:
            x, _ = read_wav(self.root / self.records[cid]["path"])
            self._clips[cid] = x[0]
        return self._clips[cid]


def _render_scene_variant(args):
    """Render the reference and all arrays of one scene variant; returns written paths."""
    root, scene_rec, variant, array_recs, order, fs, sources = args
    root = Path(root)
    scene = variant_scene(scene_rec, variant)
    bank = SourceBank(root, sources)
    clips = [bank[c] for c in scene_rec["clips"]]
    vdir = root / "scenes" / scene_rec["id"] / variant
    vdir.mkdir(parents=True, exist_ok=True)
    key = _content_hash(scene_rec, variant, order, fs)
    if not _cached(vdir / "reference.wav", key):
        ref = reference_ambisonic_rirs(scene, order, fs=fs)
        write_wav(vdir / "rir_reference.wav", _rir_to_channels(ref), fs)
        write_wav(vdir / "reference.wav", convolve_sources(ref, clips), fs)
        _mark(vdir / "reference.wav", key)
    for arec in array_recs:
        akey = _content_hash(scene_rec, arec, variant, fs)
        out = vdir / f"{arec['id']}.wav"
        if _cached(out, akey):
            continue
        rirs = array_rirs(scene, ArrayGeometry.from_record(arec), fs)
        write_wav(vdir / f"rir_{arec['id']}.wav", _rir_to_channels(rirs), fs)
        write_wav(out, convolve_sources(rirs, clips), fs)
        _mark(out, akey)
    return scene_rec["id"], variant


def _cached(path, key):
    tag = path.with_suffix(".hash")
    return path.exists() and tag.exists() and tag.read_text().strip() == key


def _mark(path, key):
    path.with_suffix(".hash").write_text(key + "\n")


def build_dataset(root, cfg=DatasetConfig(), seed=0):
    """Plan, render and save a dataset under ``root``; returns the manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    sources = ingest_sources(root, cfg.source_dir, seed, cfg.sample_rate, cfg.synthetic_clips, cfg.synthetic_seconds)
    manifest = plan_dataset(cfg, seed, sources)
    manifest.check()
    jobs = []
    for srec in manifest.scenes:
        arecs = [manifest.array(p["array_id"]) for p in manifest.pairings if p["scene_id"] == srec["id"]]
        for v in cfg.variants:
            jobs.append((str(root), srec, v, arecs, cfg.order, cfg.sample_rate, manifest.sources))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            done = list(ex.map(_render_scene_variant, jobs))
    else:
        done = [_render_scene_variant(j) for j in jobs]
    if len(done) != len(jobs):
        raise RuntimeError("render incomplete, manifest rejected")
    manifest.save(root / "manifest.json")
    return manifest


# ---------------------------------------------------------------- batches

class EpochEnd(StopIteration):
    """The split has no more batches in this epoch."""


@dataclass
class Batch:
    x: np.ndarray  # [B, Q, F, T] complex array spectra
    qg: np.ndarray  # [B, Q, 3] int
    b: np.ndarray  # [B, C, F, T] complex reference spectra
    meta: list = field(default_factory=list)

    def __len__(self):
        return self.x.shape[0]


class BatchLoader:
    """Serves STFT batches for one split.

    Training batches redraw source clips and 2 s excerpts per scene and
    epoch from the training pool and convolve them with the stored RIRs;
    other splits read the pre-rendered audio at the manifest's fixed
    excerpt, so every pass sees the same data.
    """

    def __init__(self, manifest, root, split, batch, seed=0, variants=None, fresh_sources=None, shuffle=None,
                 n_sources=None):
        self.manifest = manifest
        self.root = Path(root)
        self.split = split
        self.batch = int(batch)
        self.seed = int(seed)
        if self.batch < 1:
            raise InputError("batch must be >= 1")
        cfg = DatasetConfig.from_dict(manifest.config)
        self.cfg = cfg
        self.variants = tuple(variants or cfg.variants)
        self.fresh = split == "train" if fresh_sources is None else fresh_sources
        self.shuffle = split == "train" if shuffle is None else shuffle
        self.examples = [(p, v) for p in manifest.pairings_for(split) for v in self.variants
                         if n_sources is None or manifest.scene(p["scene_id"])["n_sources"] in n_sources]
        if not self.examples:
            raise InputError(f"split {split!r} has no examples")
        self.pool = [r["id"] for r in manifest.sources if r["split"] == split]
        self.bank = SourceBank(self.root, manifest.sources)
        self._audio = {}

    def __len__(self):
        return -(-len(self.examples) // self.batch)

    def _wav(self, rel):
        if rel not in self._audio:
            self._audio[rel] = read_wav(self.root / rel)[0]
        return self._audio[rel]

    def _signals(self, pairing, variant, epoch):
        scene = self.manifest.scene(pairing["scene_id"])
        paths = pairing["variants"][variant]
        n = int(self.cfg.excerpt_seconds * self.cfg.sample_rate)
        if not self.fresh:
            start = scene["excerpt_start"]
            return self._wav(paths["array"])[:, start:start + n], self._wav(paths["reference"])[:, start:start + n]
        idx = self.manifest.scenes.index(scene)
        rng = np.random.default_rng([self.seed, 3, epoch, idx])
        picks = rng.choice(len(self.pool), scene["n_sources"], replace=scene["n_sources"] > len(self.pool))
        clips = [self.bank[self.pool[j]] for j in picks]
        start = int(rng.integers(0, max(1, min(c.size for c in clips) - n + 1)))
        ns = scene["n_sources"]
        arr = rir_from_channels(self._wav(paths["rir_array"]), ns)
        ref = rir_from_channels(self._wav(paths["rir_reference"]), ns)
        return (convolve_sources(arr, clips)[:, start:start + n],
                convolve_sources(ref, clips)[:, start:start + n])

    def order(self, epoch):
        if not self.shuffle:
            return np.arange(len(self.examples))
        return np.random.default_rng([self.seed, 4, epoch]).permutation(len(self.examples))

    def batch_at(self, epoch, step):
        """Batch ``step`` of ``epoch``; raises :class:`EpochEnd` past the last one."""
        idx = self.order(epoch)[step * self.batch:(step + 1) * self.batch]
        if step < 0 or idx.size == 0:
            raise EpochEnd(f"epoch {epoch} has {len(self)} batches")
        xs, qs, bs, meta = [], [], [], []
        n = int(self.cfg.excerpt_seconds * self.cfg.sample_rate)
        for i in idx:
            pairing, variant = self.examples[i]
            x, b = self._signals(pairing, variant, epoch)
            x, b = _fit_length(x, n), _fit_length(b, n)
            xs.append(stft(x).data)
            bs.append(stft(b).data)
            qs.append(np.asarray(self.manifest.array(pairing["array_id"])["quantized"]))
            scene = self.manifest.scene(pairing["scene_id"])
            meta.append({"pairing": pairing["id"], "scene_id": scene["id"], "array_id": pairing["array_id"],
                         "variant": variant, "n_sources": scene["n_sources"]})
        return Batch(np.stack(xs), np.stack(qs), np.stack(bs), meta)

    def epoch(self, epoch):
        for step in range(len(self)):
            yield self.batch_at(epoch, step)


def _fit_length(x, n):
    if x.shape[1] >= n:
        return x[:, :n]
    return np.pad(x, ((0, 0), (0, n - x.shape[1])))


def load_batch(manifest, split, batch, rng, root, epoch=0, step=0, **kw):
    """One batch of the split; ``rng`` is the integer seed of the loader."""
    return BatchLoader(manifest, root, split, batch, seed=rng, **kw).batch_at(epoch, step)
