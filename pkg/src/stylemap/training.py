"""Joint adversarial training of mapping, generator, encoder and discriminator.

One step updates the discriminator first (adversarial + reconstruction
terms, lazy R1 every r1_interval steps scaled by the interval), then the
mapping/generator/encoder stack, then the EMA shadows. "sequential" mode
spends the first half of the budget on the pure GAN and the second half
on the encoder with everything else frozen.
"""

from __future__ import annotations

import json
import os
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from stylemap import losses
from stylemap.checkpoint import load_tensors, save_tensors
from stylemap.config import Config
from stylemap.data import fetch_batch, load_split
from stylemap.features import RandomConvFeatures
from stylemap.nets import Discriminator, EmaTracker, Encoder, Generator, MappingNetwork


class TrainingDiverged(RuntimeError):
    """Raised when any loss turns non-finite; carries the offending record."""

    def __init__(self, step, values):
        super().__init__(f"non-finite loss at step {step}: {values}")
        self.step = step
        self.values = values


@dataclass
class TrainState:
    cfg: Config
    mapping: MappingNetwork
    generator: Generator
    encoder: Encoder
    discriminator: Discriminator
    ema_mapping: EmaTracker
    ema_generator: EmaTracker
    ema_encoder: EmaTracker
    opt_main: torch.optim.Adam
    opt_d: torch.optim.Adam
    extractor: RandomConvFeatures
    rng: torch.Generator
    step: int = 0


@contextmanager
def frozen(module):
    params = [p for p in module.parameters() if p.requires_grad]
    for p in params:
        p.requires_grad_(False)
    try:
        yield
    finally:
        for p in params:
            p.requires_grad_(True)


def build_state(cfg: Config) -> TrainState:
    tc = cfg.train
    torch.manual_seed(tc.seed)
    mapping = MappingNetwork(cfg.network)
    generator = Generator(cfg.network)
    encoder = Encoder(cfg.network)
    discriminator = Discriminator(cfg.network)
    main_params = [
        {"params": list(generator.parameters()) + list(encoder.parameters())},
        {"params": list(mapping.parameters()), "lr": tc.lr * tc.mapping_lr_mult},
    ]
    opt_main = torch.optim.Adam(main_params, lr=tc.lr, betas=(tc.beta1, tc.beta2))
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=tc.lr, betas=(tc.beta1, tc.beta2))
    rng = torch.Generator().manual_seed(tc.seed + 1)
    return TrainState(
        cfg=cfg,
        mapping=mapping,
        generator=generator,
        encoder=encoder,
        discriminator=discriminator,
        ema_mapping=EmaTracker(mapping, tc.ema_decay),
        ema_generator=EmaTracker(generator, tc.ema_decay),
        ema_encoder=EmaTracker(encoder, tc.ema_decay),
        opt_main=opt_main,
        opt_d=opt_d,
        extractor=RandomConvFeatures(seed=tc.perceptual_seed),
        rng=rng,
    )


def phase_of(cfg: Config, step: int) -> str:
    if cfg.train.mode == "joint":
        return "joint"
    return "gan" if step < cfg.train.total_steps // 2 else "enc"


def _set_phase_flags(state: TrainState, phase: str):
    enc_only = phase == "enc"
    for mod in (state.mapping, state.generator, state.discriminator):
        mod.train(not enc_only)
        for p in mod.parameters():
            p.requires_grad_(not enc_only)
    state.encoder.train(True)


def augment_hflip(batch: torch.Tensor, prob: float, rng: torch.Generator) -> torch.Tensor:
    flip = torch.rand(batch.shape[0], generator=rng) < prob
    out = batch.clone()
    out[flip] = out[flip].flip(-1)
    return out


def train_step(state: TrainState, batch: torch.Tensor) -> losses.LossBundle:
    """One optimization step over all networks; returns the loss record."""
    cfg, tc = state.cfg, state.cfg.train
    coef = tc.coefficients
    phase = phase_of(cfg, state.step)
    _set_phase_flags(state, phase)
    bundle = losses.LossBundle(coefficients=dict(coef))

    z = torch.randn(batch.shape[0], cfg.network.latent_dim, generator=state.rng)
    w = state.mapping(z)
    x_fake = state.generator(w)
    if phase != "gan":
        w_enc = state.encoder(batch)
        x_rec = state.generator.synthesize(state.generator.resize(w_enc))

    if phase != "enc":
        real_logits = state.discriminator(batch)
        fake_logits = state.discriminator(x_fake.detach())
        loss_adv_d = losses.adv_d_loss(real_logits, fake_logits)
        bundle.adv_d = loss_adv_d.item()
        d_total = coef["adv_d"] * loss_adv_d
        if phase == "joint":
            loss_dg_d = losses.domain_guided_d_loss(state.discriminator, x_rec)
            bundle.domain_guided_d = loss_dg_d.item()
            d_total = d_total + coef["domain_guided_d"] * loss_dg_d
        if (state.step + 1) % tc.r1_interval == 0:
            loss_r1 = losses.r1_penalty(state.discriminator, batch, tc.r1_gamma)
            bundle.r1 = loss_r1.item()
            # Lazy regularization: scale by the interval so the running
            # average matches the per-step penalty.
            d_total = d_total + coef["r1"] * tc.r1_interval * loss_r1
        state.opt_d.zero_grad(set_to_none=True)
        d_total.backward()
        state.opt_d.step()

    g_total = batch.new_zeros(())
    if phase != "enc":
        with frozen(state.discriminator):
            loss_adv_g = losses.adv_g_loss(state.discriminator(x_fake))
        bundle.adv_g = loss_adv_g.item()
        g_total = g_total + coef["adv_g"] * loss_adv_g
    if phase == "joint":
        loss_dg_eg = losses.domain_guided_eg_loss(state.discriminator, x_rec)
        bundle.domain_guided_eg = loss_dg_eg.item()
        g_total = g_total + coef["domain_guided_eg"] * loss_dg_eg
    if phase != "gan":
        loss_latent = losses.latent_recon_loss(w, state.encoder(x_fake))
        loss_image = losses.image_recon_loss(batch, x_rec)
        loss_perc = losses.perceptual_loss(batch, x_rec, state.extractor)
        bundle.latent_recon = loss_latent.item()
        bundle.image_recon = loss_image.item()
        bundle.perceptual = loss_perc.item()
        g_total = (
            g_total
            + coef["latent_recon"] * loss_latent
            + coef["image_recon"] * loss_image
            + coef["perceptual"] * loss_perc
        )
    state.opt_main.zero_grad(set_to_none=True)
    g_total.backward()
    state.opt_main.step()

    state.ema_mapping.update(state.mapping)
    state.ema_generator.update(state.generator)
    state.ema_encoder.update(state.encoder)
    state.step += 1

    if not bundle.finite():
        raise TrainingDiverged(state.step - 1, bundle.values())
    return bundle


# --- checkpointing ---------------------------------------------------------

_MODULES = ("mapping", "generator", "encoder", "discriminator")
_EMAS = ("ema_mapping", "ema_generator", "ema_encoder")


def _named_main_params(state: TrainState):
    for prefix in ("generator", "encoder", "mapping"):
        for name, p in getattr(state, prefix).named_parameters():
            yield f"{prefix}.{name}", p


def _collect_opt(tensors, opt, named_params, prefix):
    for name, p in named_params:
        st = opt.state.get(p)
        if not st:
            continue
        tensors[f"{prefix}.{name}.step"] = np.float32(st["step"]).reshape(1)
        tensors[f"{prefix}.{name}.exp_avg"] = st["exp_avg"].numpy()
        tensors[f"{prefix}.{name}.exp_avg_sq"] = st["exp_avg_sq"].numpy()


def _restore_opt(tensors, opt, named_params, prefix):
    for name, p in named_params:
        key = f"{prefix}.{name}.step"
        if key not in tensors:
            continue
        opt.state[p] = {
            "step": torch.tensor(float(tensors[key][0])),
            "exp_avg": torch.from_numpy(tensors[f"{prefix}.{name}.exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(tensors[f"{prefix}.{name}.exp_avg_sq"].copy()),
        }


def save_checkpoint(state: TrainState, path: str) -> None:
    tensors: dict[str, np.ndarray] = {}
    for name in _MODULES:
        for k, v in getattr(state, name).state_dict().items():
            tensors[f"{name}.{k}"] = v.detach().numpy()
    for name in _EMAS:
        for k, v in getattr(state, name).module.state_dict().items():
            tensors[f"{name}.{k}"] = v.detach().numpy()
    _collect_opt(tensors, state.opt_main, list(_named_main_params(state)), "opt_main")
    _collect_opt(
        tensors, state.opt_d, list(state.discriminator.named_parameters()), "opt_d"
    )
    tensors["rng_state"] = state.rng.get_state().numpy()
    meta = {
        "format_version": 1,
        "config": state.cfg.to_dict(),
        "step": state.step,
        "seed": state.cfg.train.seed,
        "ema_decay": state.cfg.train.ema_decay,
    }
    save_tensors(path, tensors, meta)


def _load_module(module, tensors, prefix):
    sd = {}
    for k, v in module.state_dict().items():
        arr = tensors[f"{prefix}.{k}"]
        sd[k] = torch.from_numpy(arr.copy()).to(v.dtype).view(v.shape)
    module.load_state_dict(sd)


def load_checkpoint(path: str) -> TrainState:
    tensors, meta = load_tensors(path)
    cfg = Config.from_dict(meta["config"])
    state = build_state(cfg)
    for name in _MODULES:
        _load_module(getattr(state, name), tensors, name)
    for name in _EMAS:
        _load_module(getattr(state, name).module, tensors, name)
    _restore_opt(tensors, state.opt_main, list(_named_main_params(state)), "opt_main")
    _restore_opt(
        tensors, state.opt_d, list(state.discriminator.named_parameters()), "opt_d"
    )
    state.rng.set_state(torch.from_numpy(tensors["rng_state"].copy()))
    state.step = int(meta["step"])
    return state


def load_inference(path: str):
    """EMA networks in eval mode, as used by the editor, metrics and service."""
    state = load_checkpoint(path)
    mapping = state.ema_mapping.module.eval()
    generator = state.ema_generator.module.eval()
    encoder = state.ema_encoder.module.eval()
    return state.cfg, mapping, generator, encoder


# --- loop -------------------------------------------------------------------


def train_loop(cfg: Config, out_dir: str, resume: str | None = None, log_fn=None):
    """Runs training to total_steps; returns (state, history of LossBundle)."""
    os.makedirs(out_dir, exist_ok=True)
    if resume:
        state = load_checkpoint(resume)
        cfg = state.cfg
    else:
        state = build_state(cfg)
    tc = cfg.train
    train_set = load_split(cfg.data, "train", cfg.network.image_size)
    history = []
    log_path = os.path.join(out_dir, "losses.ndjson")
    with open(log_path, "a") as log:
        while state.step < tc.total_steps:
            batch = fetch_batch(train_set, tc.batch_size, tc.seed, state.step)
            batch = augment_hflip(batch, tc.hflip_prob, state.rng)
            step_idx = state.step
            bundle = train_step(state, batch)
            history.append(bundle)
            for name, value in bundle.values().items():
                log.write(json.dumps({"step": step_idx, "name": name, "value": value}) + "\n")
            if log_fn and (state.step % tc.log_every == 0 or state.step == tc.total_steps):
                log_fn(state.step, bundle)
            if tc.checkpoint_every and state.step % tc.checkpoint_every == 0:
                save_checkpoint(state, os.path.join(out_dir, f"step_{state.step:06d}.ckpt"))
    save_checkpoint(state, os.path.join(out_dir, "last.ckpt"))
    return state, history
