"""Staged pipeline orchestration used by the CLI.

Artifact layout under ``config.out_dir``::

    dataset/                     rendered objects + manifests
    checkpoints/<stage>.ckpt     tokenizer | captionsim | t2v | v23d
    checkpoints/bpe_merges.txt   caption tokenizer merge table
    logs/<stage>_loss.csv        step + loss-term columns
    bundles/<slug>/              cmd_generate outputs
    eval/                        cmd_eval reports
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .autodiff.optim import AdamW, Schedule
from .captionsim import DualEncoder, clip_score, train_dual_encoder
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PipelineConfig
from .errors import ContractViolation, MissingDependencyError
from .metrics import consistency_error, psnr, ssim
from .radiance import (
    RadianceField,
    evenly_spaced_views,
    render_view,
    train_views_to_3d,
)
from .scene import Dataset, NUM_RIG_POSES, camera_rig, generate_dataset, load_dataset
from .textviews import (
    TextToViews,
    TransformerConfig,
    generate_views,
    tokenize_dataset,
)
from .textviews.generator import train_text_to_views
from .textviews.losses import ContrastiveConfig, LossWeights
from .tokens import BPETokenizer, VQTokenizer, train_image_tokenizer

STAGES = ("tokenizer", "captionsim", "t2v", "v23d")
T2V_LOG_COLUMNS = ("step", "total", "pose", "txt", "prior", "img",
                   "pixel", "caption", "contrastive")
EVAL_TARGET_POSE = 2


class Pipeline:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.root = Path(cfg.out_dir)
        self.dataset_dir = self.root / "dataset"
        self.ckpt_dir = self.root / "checkpoints"
        self.logs_dir = self.root / "logs"
        self.bundles_dir = self.root / "bundles"
        self.eval_dir = self.root / "eval"
        self._dataset: Dataset | None = None

    # -- paths ----------------------------------------------------------------

    def ckpt_path(self, stage: str) -> Path:
        return self.ckpt_dir / f"{stage}.ckpt"

    @property
    def merges_path(self) -> Path:
        return self.ckpt_dir / "bpe_merges.txt"

    def loss_log_path(self, stage: str) -> Path:
        return self.logs_dir / f"{stage}_loss.csv"

    # -- dataset ----------------------------------------------------------------

    def build_dataset(self) -> Path:
        d = self.cfg.dataset
        if d.objects < 1:
            raise ContractViolation("dataset.objects must be >= 1")
        self.root.mkdir(parents=True, exist_ok=True)
        generate_dataset(self.dataset_dir, d.objects, d.resolution,
                         master_seed=self.cfg.seed, fov_deg=d.fov_deg,
                         camera_radius=d.camera_radius,
                         elevation_deg=d.elevation_deg)
        self._dataset = None
        return self.dataset_dir

    def dataset(self) -> Dataset:
        if self._dataset is None:
            if not (self.dataset_dir / "dataset.json").exists():
                raise MissingDependencyError(
                    "missing stage 'dataset': run the dataset command first")
            self._dataset = load_dataset(self.dataset_dir)
        return self._dataset

    # -- model constructors -------------------------------------------------------

    def make_vq(self) -> VQTokenizer:
        t = self.cfg.tokenizer
        return VQTokenizer(resolution=self.cfg.dataset.resolution,
                           codebook_size=t.codebook_size, code_dim=t.code_dim,
                           downsample=t.downsample, seed=self.cfg.seed)

    def make_clip(self) -> DualEncoder:
        return DualEncoder(resolution=self.cfg.dataset.resolution,
                           text_vocab=self.cfg.text.vocab_size,
                           max_caption_len=self.cfg.text.max_len,
                           embed_dim=self.cfg.clip.embed_dim, seed=self.cfg.seed)

    def make_field(self) -> RadianceField:
        v = self.cfg.v23d
        return RadianceField(feature_dim=v.feature_dim, hidden=v.hidden,
                             block=v.block, seed=self.cfg.seed,
                             resolution=self.cfg.dataset.resolution)

    def make_t2v(self, vq: VQTokenizer, bpe: BPETokenizer,
                 clip: DualEncoder) -> TextToViews:
        t = self.cfg.t2v
        weights = LossWeights(t.weight_pose, t.weight_txt, t.weight_prior,
                              t.weight_img, t.weight_pixel, t.weight_caption,
                              t.weight_contrastive)
        return TextToViews(
            vq, bpe, clip,
            TransformerConfig(t.layers, t.heads, t.head_dim, t.ffn_dim, t.dropout),
            seed=self.cfg.seed, prior_guidance=t.prior_guidance, weights=weights,
            contrastive=ContrastiveConfig(t.temperature, t.include_positive))

    # -- checkpoint helpers ---------------------------------------------------------

    def _save_stage(self, stage: str, named_params: list, opt: AdamW, step: int) -> Path:
        tensors = {f"param.{n}": p.data for n, p in named_params}
        for (name, _), m, v in zip(named_params, opt.m, opt.v):
            tensors[f"optm.{name}"] = m
            tensors[f"optv.{name}"] = v
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        path = self.ckpt_path(stage)
        save_checkpoint(path, stage, self.cfg.config_hash(), tensors,
                        extra={"step": step, "opt_step": opt.step_count})
        return path

    def _load_stage(self, stage: str, named_params: list,
                    opt: AdamW | None = None,
                    allow_config_mismatch: bool = False) -> int:
        path = self.ckpt_path(stage)
        if not path.exists():
            raise MissingDependencyError(
                f"missing stage '{stage}': checkpoint {path} not found")
        tag, tensors, extra, _ = load_checkpoint(
            path, expect_config_hash=self.cfg.config_hash(),
            allow_config_mismatch=allow_config_mismatch)
        if tag != stage:
            raise MissingDependencyError(
                f"checkpoint {path} holds stage '{tag}', expected '{stage}'")
        for name, p in named_params:
            p.data = tensors[f"param.{name}"].astype(p.data.dtype)
        if opt is not None:
            opt.step_count = int(extra["opt_step"])
            opt.m = [tensors[f"optm.{n}"].astype(p.data.dtype)
                     for n, p in named_params]
            opt.v = [tensors[f"optv.{n}"].astype(p.data.dtype)
                     for n, p in named_params]
        return int(extra["step"])

    def _write_log(self, stage: str, rows: list[str], header: str,
                   append: bool) -> None:
        self.logs_dir.mkdir(parents=True, exist_ok=True)
        path = self.loss_log_path(stage)
        mode = "a" if append and path.exists() else "w"
        with open(path, mode) as fh:
            if mode == "w":
                fh.write(header + "\n")
            fh.write("\n".join(rows) + ("\n" if rows else ""))

    # -- stage training ------------------------------------------------------------

    def train_stage(self, stage: str, resume: bool = False,
                    allow_config_mismatch: bool = False, verbose: bool = True,
                    stop_step: int | None = None) -> Path:
        if stage not in STAGES:
            raise ContractViolation(f"unknown stage '{stage}' (choose from {STAGES})")
        log_fn = print if verbose else (lambda *_: None)
        dataset = self.dataset()
        train_objs = dataset.split("train")
        if stage == "tokenizer":
            return self._train_tokenizer(dataset, train_objs, resume,
                                         allow_config_mismatch, log_fn, stop_step)
        if stage == "captionsim":
            return self._train_captionsim(dataset, train_objs, resume,
                                          allow_config_mismatch, log_fn, stop_step)
        if stage == "t2v":
            return self._train_t2v(dataset, resume, allow_config_mismatch,
                                   log_fn, stop_step)
        return self._train_v23d(train_objs, resume, allow_config_mismatch,
                                log_fn, stop_step)

    def _train_tokenizer(self, dataset, train_objs, resume, allow, log_fn,
                         stop_step=None) -> Path:
        cfg = self.cfg.tokenizer
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        bpe = BPETokenizer.build(sorted(set(dataset.captions())),
                                 self.cfg.text.vocab_size, self.cfg.text.max_len)
        bpe.save_merges(self.merges_path)
        images = np.stack([o.white_view(v) for o in train_objs
                           for v in range(NUM_RIG_POSES)]).astype(np.float32)
        vq = self.make_vq()
        opt = AdamW(vq.parameters(), lr=cfg.lr, betas=(0.9, 0.96), weight_decay=0.0)
        start = 0
        if resume:
            start = self._load_stage("tokenizer", vq.named_parameters(), opt, allow)
        log, opt = train_image_tokenizer(
            images, vq, steps=cfg.steps, batch_size=cfg.batch_size, lr=cfg.lr,
            seed=self.cfg.seed, start_step=start, stop_step=stop_step,
            optimizer=opt,
            log_every=100 if log_fn is print else 0, log_fn=log_fn)
        self._write_log("tokenizer", [f"{s},{v}" for s, v in log], "step,total", resume)
        reached = cfg.steps if stop_step is None else min(cfg.steps, stop_step)
        return self._save_stage("tokenizer", vq.named_parameters(), opt, reached)

    def _train_captionsim(self, dataset, train_objs, resume, allow, log_fn,
                          stop_step=None) -> Path:
        cfg = self.cfg.clip
        bpe = self.load_bpe()
        pairs = [(o.white_view(v), o.caption)
                 for o in train_objs for v in range(0, NUM_RIG_POSES, 4)]
        clip = self.make_clip()
        opt = AdamW(clip.parameters(), lr=cfg.lr, betas=(0.9, 0.96), weight_decay=1e-4)
        start = 0
        if resume:
            start = self._load_stage("captionsim", clip.named_parameters(), opt, allow)
        log, opt = train_dual_encoder(
            pairs, bpe, clip, steps=cfg.steps, batch_size=cfg.batch_size,
            lr=cfg.lr, seed=self.cfg.seed, start_step=start, stop_step=stop_step,
            optimizer=opt,
            log_every=200 if log_fn is print else 0, log_fn=log_fn)
        self._write_log("captionsim", [f"{s},{v}" for s, v in log], "step,total", resume)
        reached = cfg.steps if stop_step is None else min(cfg.steps, stop_step)
        return self._save_stage("captionsim", clip.named_parameters(), opt, reached)

    def _train_t2v(self, dataset, resume, allow, log_fn, stop_step=None) -> Path:
        cfg = self.cfg.t2v
        model = self.load_t2v_dependencies()
        opt = AdamW(model.parameters(), lr=cfg.lr, betas=(0.9, 0.96),
                    weight_decay=1e-4,
                    schedule=Schedule(cfg.schedule, cfg.lr, total_steps=cfg.steps))
        start = 0
        if resume:
            start = self._load_stage("t2v", model.named_parameters(), opt, allow)
        objects = tokenize_dataset(dataset, model, split="train")
        log, opt = train_text_to_views(
            model, objects, steps=cfg.steps, batch_objects=cfg.batch_objects,
            lr=cfg.lr, schedule=cfg.schedule, seed=self.cfg.seed,
            start_step=start, stop_step=stop_step, optimizer=opt,
            log_every=100 if log_fn is print else 0, log_fn=log_fn)
        rows = [",".join(str(r[c]) for c in T2V_LOG_COLUMNS) for r in log]
        self._write_log("t2v", rows, ",".join(T2V_LOG_COLUMNS), resume)
        reached = cfg.steps if stop_step is None else min(cfg.steps, stop_step)
        return self._save_stage("t2v", model.named_parameters(), opt, reached)

    def _train_v23d(self, train_objs, resume, allow, log_fn, stop_step=None) -> Path:
        cfg = self.cfg.v23d
        field = self.make_field()
        opt = AdamW(field.parameters(), lr=cfg.lr, betas=(0.9, 0.96),
                    weight_decay=0.0,
                    schedule=Schedule("cosine", cfg.lr, total_steps=cfg.steps))
        start = 0
        if resume:
            start = self._load_stage("v23d", field.named_parameters(), opt, allow)
        log, opt = train_views_to_3d(
            field, train_objs, steps=cfg.steps, batch_objects=cfg.batch_objects,
            lr=cfg.lr, seed=self.cfg.seed, cond_count=cfg.cond_views,
            rays=cfg.rays_per_object, n_samples=cfg.samples_per_ray,
            bbox_fraction=cfg.bbox_fraction, start_step=start,
            stop_step=stop_step, optimizer=opt,
            log_every=200 if log_fn is print else 0, log_fn=log_fn)
        self._write_log("v23d", [f"{s},{v}" for s, v in log], "step,total", resume)
        reached = cfg.steps if stop_step is None else min(cfg.steps, stop_step)
        return self._save_stage("v23d", field.named_parameters(), opt, reached)

    # -- stage loading ------------------------------------------------------------

    def load_bpe(self) -> BPETokenizer:
        if not self.merges_path.exists():
            raise MissingDependencyError(
                "missing stage 'tokenizer': bpe merge table not found")
        return BPETokenizer.load_merges(self.merges_path)

    def load_t2v_dependencies(self) -> TextToViews:
        vq = self.make_vq()
        self._load_stage("tokenizer", vq.named_parameters())
        bpe = self.load_bpe()
        clip = self.make_clip()
        self._load_stage("captionsim", clip.named_parameters())
        return self.make_t2v(vq, bpe, clip)

    def load_all(self) -> tuple[TextToViews, RadianceField]:
        model = self.load_t2v_dependencies()
        self._load_stage("t2v", model.named_parameters())
        field = self.make_field()
        self._load_stage("v23d", field.named_parameters())
        return model, field

    # -- generate ----------------------------------------------------------------

    def generate(self, caption: str, n_views: int | None = None,
                 mode: str = "greedy", top_k: int = 8,
                 verbose: bool = True) -> Path:
        model, field = self.load_all()
        n = n_views if n_views is not None else self.cfg.v23d.eval_views
        rng = (np.random.default_rng([self.cfg.seed, 97])
               if mode == "topk" else None)
        views = generate_views(model, caption, n, mode=mode, top_k=top_k, rng=rng,
                               resolution=self.cfg.dataset.resolution,
                               fov_deg=self.cfg.dataset.fov_deg,
                               camera_radius=self.cfg.dataset.camera_radius,
                               elevation_deg=self.cfg.dataset.elevation_deg)
        images = [img for _, img, _ in views]
        poses = [pose for _, _, pose in views]
        feats = field.extract_features(np.stack(images).astype(np.float32))

        slug = re.sub(r"[^a-z0-9]+", "-", caption.lower()).strip("-") or "caption"
        bundle = self.bundles_dir / f"{slug}_seed{self.cfg.seed}_{mode}"
        bundle.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(images):
            _save_rgb(bundle / f"generated_{i:02d}.png", img)

        d = self.cfg.dataset
        n_samples = self.cfg.v23d.samples_per_ray
        trans_map = depth_map = None
        near = d.camera_radius - 1.5
        far = d.camera_radius + 1.5
        for p in range(NUM_RIG_POSES):
            pose = camera_rig(p, d.resolution, d.fov_deg, d.camera_radius,
                              d.elevation_deg)
            rgb, trans, depth = render_view(
                field, feats, poses, pose, n_samples=n_samples,
                rng=np.random.default_rng([self.cfg.seed, 89, p]))
            _save_rgb(bundle / f"render_{p:02d}.png", rgb)
            if p == 0:
                trans_map, depth_map = trans, depth
            if verbose and p % 9 == 0:
                print(f"rendered orbit pose {p}/{NUM_RIG_POSES}")
        _save_gray(bundle / "transmittance_00.png", trans_map)
        _save_gray(bundle / "depth_00.png", (depth_map - near) / (far - near))

        score = clip_score(model.clip,
                           [r for r in _load_renders(bundle)],
                           model.caption_ids(caption))
        report = {
            "caption": caption,
            "n_views": n,
            "mode": mode,
            "clip_score": score,
            "config": self.cfg.to_text(),
        }
        (bundle / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
        return bundle

    # -- eval ---------------------------------------------------------------------

    def evaluate(self, split: str, verbose: bool = True) -> Path:
        if split not in ("val", "test"):
            raise ContractViolation(f"unknown split '{split}' (val or test)")
        dataset = self.dataset()
        objects = dataset.split(split)
        if not objects:
            raise ContractViolation(f"split '{split}' is empty")
        model, field = self.load_all()
        n = self.cfg.v23d.eval_views
        n_samples = self.cfg.v23d.samples_per_ray
        rows: list[tuple[str, str, float]] = []
        for obj in objects:
            target = EVAL_TARGET_POSE
            cond = evenly_spaced_views(n, NUM_RIG_POSES, exclude=target)
            gt = obj.white_view(target)
            feats = field.extract_features(
                np.stack([obj.white_view(v) for v in cond]).astype(np.float32))
            rgb, _, _ = render_view(field, feats, [obj.poses[v] for v in cond],
                                    obj.poses[target], n_samples=n_samples)
            rows.append(("psnr_recon", obj.object_id, psnr(rgb, gt)))
            rows.append(("ssim_recon", obj.object_id, ssim(rgb, gt)))

            views = generate_views(model, obj.caption, n,
                                   resolution=dataset.resolution,
                                   fov_deg=dataset.fov_deg,
                                   camera_radius=dataset.camera_radius,
                                   elevation_deg=dataset.elevation_deg)
            gen_imgs = [img for _, img, _ in views]
            gen_feats = field.extract_features(np.stack(gen_imgs).astype(np.float32))
            rgb_gen, _, _ = render_view(field, gen_feats,
                                        [p for _, _, p in views],
                                        obj.poses[target], n_samples=n_samples)
            rows.append(("psnr_gen", obj.object_id, psnr(rgb_gen, gt)))
            rows.append(("ssim_gen", obj.object_id, ssim(rgb_gen, gt)))
            rows.append(("consistency_gen", obj.object_id, consistency_error(gen_imgs)))
            rows.append(("clip_score_gen", obj.object_id,
                         clip_score(model.clip, gen_imgs, model.caption_ids(obj.caption))))
            if verbose:
                print(f"evaluated {obj.object_id}")

        self.eval_dir.mkdir(parents=True, exist_ok=True)
        rows_path = self.eval_dir / f"{split}_rows.csv"
        with open(rows_path, "w") as fh:
            fh.write("metric,object_id,value\n")
            for metric, oid, value in rows:
                fh.write(f"{metric},{oid},{value}\n")
        summary_path = self.eval_dir / f"{split}_summary.csv"
        metrics = sorted({m for m, _, _ in rows})
        with open(summary_path, "w") as fh:
            fh.write("metric,mean\n")
            for metric in metrics:
                values = [v for m, _, v in rows if m == metric]
                fh.write(f"{metric},{float(np.mean(values))}\n")
        return summary_path


def _save_rgb(path: Path, rgb: np.ndarray) -> None:
    data = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def _save_gray(path: Path, gray: np.ndarray) -> None:
    data = np.clip(np.rint(np.asarray(gray) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def _load_renders(bundle: Path) -> list[np.ndarray]:
    out = []
    for path in sorted(bundle.glob("render_*.png")):
        with Image.open(path) as im:
            out.append(np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0)
    return out
