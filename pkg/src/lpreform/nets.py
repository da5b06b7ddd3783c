"""Policy networks: graph encoder, pointer decoder, reward critic.

Everything runs on CPU in float64 so finite-difference gradient checks are
meaningful and runs are bit-reproducible for a fixed seed. The encoder
follows the two-pass convolution scheme: per round, constraint nodes absorb a
sum of messages from incident variable nodes, then variable nodes absorb a
sum of messages from incident constraint nodes; one shared set of perceptrons
is applied for all rounds.
"""

from __future__ import annotations

import json
import math

import numpy as np
import torch
import torch.nn as nn

from .exceptions import CheckpointFormatError, NonFiniteError

DTYPE = torch.float64
EMBED_WIDTH = 64  # width of the graph-side embeddings
POINTER_WIDTH = 128  # hidden width of the pointer encoder/decoder
CONV_ROUNDS = 2

CHECKPOINT_VERSION = 1


def _init_affine(weight, bias=None):
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero bias."""
    fan_out, fan_in = weight.shape[0], weight.shape[1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        weight.uniform_(-bound, bound)
        if bias is not None:
            bias.zero_()


def _check_finite(tensor, where):
    if not torch.isfinite(tensor).all():
        raise NonFiniteError(f"non-finite activation in {where}")


class PreNorm(nn.Module):
    """Per-feature affine input conditioner.

    Starts as the identity; `finalize` freezes shift/scale from statistics
    accumulated while `collecting` is set. Once frozen the transform never
    changes again (buffers travel with checkpoints).
    """

    def __init__(self, dim):
        super().__init__()
        self.register_buffer("shift", torch.zeros(dim, dtype=DTYPE))
        self.register_buffer("scale", torch.ones(dim, dtype=DTYPE))
        self.register_buffer("frozen", torch.zeros(1, dtype=torch.uint8))
        self.collecting = False
        self._sum = None
        self._sumsq = None
        self._count = 0

    def forward(self, x):
        if self.collecting and not bool(self.frozen):
            with torch.no_grad():
                flat = x.reshape(-1, x.shape[-1])
                if self._sum is None:
                    self._sum = flat.sum(dim=0)
                    self._sumsq = (flat * flat).sum(dim=0)
                else:
                    self._sum += flat.sum(dim=0)
                    self._sumsq += (flat * flat).sum(dim=0)
                self._count += flat.shape[0]
        return (x + self.shift) * self.scale

    def finalize(self):
        if self._count:
            mean = self._sum / self._count
            var = self._sumsq / self._count - mean * mean
            std = torch.sqrt(torch.clamp(var, min=0.0))
            with torch.no_grad():
                self.shift.copy_(-mean)
                self.scale.copy_(torch.where(std >= 1e-8, 1.0 / std, torch.ones_like(std)))
        self.frozen.fill_(1)
        self.collecting = False
        self._sum = self._sumsq = None
        self._count = 0


class Perceptron(nn.Module):
    """PreNorm -> Linear -> ReLU -> Linear -> ReLU."""

    def __init__(self, in_dim, out_dim, hidden=None):
        super().__init__()
        hidden = hidden or out_dim
        self.prenorm = PreNorm(in_dim)
        self.lin1 = nn.Linear(in_dim, hidden, dtype=DTYPE)
        self.lin2 = nn.Linear(hidden, out_dim, dtype=DTYPE)
        _init_affine(self.lin1.weight, self.lin1.bias)
        _init_affine(self.lin2.weight, self.lin2.bias)

    def forward(self, x):
        x = self.prenorm(x)
        x = torch.relu(self.lin1(x))
        return torch.relu(self.lin2(x))


class GraphTensors:
    """Torch views of a BipartiteGraph, cached per instance during training."""

    def __init__(self, graph):
        self.cons = torch.from_numpy(np.ascontiguousarray(graph.cons_feats))
        self.vars = torch.from_numpy(np.ascontiguousarray(graph.var_feats))
        self.edge_rows = torch.from_numpy(np.ascontiguousarray(graph.edge_rows))
        self.edge_cols = torch.from_numpy(np.ascontiguousarray(graph.edge_cols))
        self.edge_feats = torch.from_numpy(np.ascontiguousarray(graph.edge_feats)).unsqueeze(1)


class GraphEncoder(nn.Module):
    """Two-pass graph convolution producing one embedding row per variable."""

    def __init__(self, cons_dim=3, var_dim=3, width=EMBED_WIDTH, rounds=CONV_ROUNDS):
        super().__init__()
        self.width = width
        self.rounds = rounds
        self.cons_embed = Perceptron(cons_dim, width)
        self.var_embed = Perceptron(var_dim, width)
        self.msg_to_cons = Perceptron(2 * width + 1, width)  # inputs (c_i, v_j, e_ij)
        self.upd_cons = Perceptron(2 * width, width)
        self.msg_to_var = Perceptron(2 * width + 1, width)
        self.upd_var = Perceptron(2 * width, width)

    def prenorm_modules(self):
        order = [
            self.cons_embed,
            self.var_embed,
            self.msg_to_cons,
            self.upd_cons,
            self.msg_to_var,
            self.upd_var,
        ]
        return [p.prenorm for p in order]

    def forward(self, gt):
        h_cons = self.cons_embed(gt.cons)
        h_vars = self.var_embed(gt.vars)
        rows, cols, efeat = gt.edge_rows, gt.edge_cols, gt.edge_feats
        for _ in range(self.rounds):
            if rows.numel():
                joint = torch.cat([h_cons[rows], h_vars[cols], efeat], dim=1)
                agg_c = torch.zeros_like(h_cons).index_add_(0, rows, self.msg_to_cons(joint))
            else:
                agg_c = torch.zeros_like(h_cons)
            h_cons = self.upd_cons(torch.cat([h_cons, agg_c], dim=1))
            if rows.numel():
                joint = torch.cat([h_cons[rows], h_vars[cols], efeat], dim=1)
                agg_v = torch.zeros_like(h_vars).index_add_(0, cols, self.msg_to_var(joint))
            else:
                agg_v = torch.zeros_like(h_vars)
            h_vars = self.upd_var(torch.cat([h_vars, agg_v], dim=1))
        _check_finite(h_vars, "graph encoder output")
        return h_vars

    def calibrate(self, graph_tensors):
        """Freeze every PreNorm from statistics over the given graphs, one
        prenorm per sweep so later layers see already-frozen inputs."""
        for prenorm in self.prenorm_modules():
            if bool(prenorm.frozen):
                continue
            prenorm.collecting = True
            with torch.no_grad():
                for gt in graph_tensors:
                    self.forward(gt)
            prenorm.finalize()


class PointerNetwork(nn.Module):
    """Sequence model emitting a cluster permutation step by step.

    Encoder and decoder are single LSTM cells over projected cluster
    embeddings; an additive attention head scores the not-yet-chosen clusters
    at each decode step. The attention score vector starts at zero, so a
    freshly initialized network samples permutations exactly uniformly.
    """

    def __init__(self, emb_dim=EMBED_WIDTH, hidden=POINTER_WIDTH):
        super().__init__()
        self.hidden = hidden
        self.input_proj = nn.Linear(emb_dim, hidden, dtype=DTYPE)
        self.encoder = nn.LSTMCell(hidden, hidden, dtype=DTYPE)
        self.decoder = nn.LSTMCell(hidden, hidden, dtype=DTYPE)
        self.attn_enc = nn.Linear(hidden, hidden, bias=False, dtype=DTYPE)
        self.attn_dec = nn.Linear(hidden, hidden, dtype=DTYPE)
        self.attn_v = nn.Parameter(torch.zeros(hidden, dtype=DTYPE))
        self.start_token = nn.Parameter(torch.zeros(hidden, dtype=DTYPE))
        self._init()

    def _init(self):
        _init_affine(self.input_proj.weight, self.input_proj.bias)
        _init_affine(self.attn_enc.weight)
        _init_affine(self.attn_dec.weight, self.attn_dec.bias)
        for cell in (self.encoder, self.decoder):
            _init_affine(cell.weight_ih, cell.bias_ih)
            _init_affine(cell.weight_hh, cell.bias_hh)
            with torch.no_grad():
                # forget-gate bias 1.0 (torch gate order: input, forget, cell, output)
                h = self.hidden
                cell.bias_ih[h : 2 * h].fill_(1.0)
        with torch.no_grad():
            bound = math.sqrt(6.0 / (2 * self.hidden))
            self.start_token.uniform_(-bound, bound)

    def decode(self, cluster_embs, mode="sample", generator=None):
        """Return (permutation list, log-probability tensor).

        mode "sample" draws each step from the masked softmax (a torch
        Generator gives reproducibility); "greedy" takes the argmax, lowest
        index on exact ties. Already-chosen clusters are masked to -inf, so
        their probability is exactly zero.
        """
        if mode not in ("sample", "greedy"):
            raise ValueError(f"unknown decode mode {mode!r}")
        k = cluster_embs.shape[0]
        if k < 1:
            raise ValueError("need at least one cluster")
        x = self.input_proj(cluster_embs)  # (k, hidden)
        h = torch.zeros(self.hidden, dtype=DTYPE)
        c = torch.zeros(self.hidden, dtype=DTYPE)
        enc_states = []
        for i in range(k):
            h, c = self.encoder(x[i].unsqueeze(0), (h.unsqueeze(0), c.unsqueeze(0)))
            h, c = h.squeeze(0), c.squeeze(0)
            enc_states.append(h)
        enc = torch.stack(enc_states)  # (k, hidden)
        enc_proj = self.attn_enc(enc)

        dec_h, dec_c = h, c
        inp = self.start_token
        chosen_mask = torch.zeros(k, dtype=torch.bool)
        perm = []
        log_prob = torch.zeros((), dtype=DTYPE)
        step_log_probs = []
        for _ in range(k):
            dh, dc = self.decoder(
                inp.unsqueeze(0), (dec_h.unsqueeze(0), dec_c.unsqueeze(0))
            )
            dec_h, dec_c = dh.squeeze(0), dc.squeeze(0)
            scores = torch.tanh(enc_proj + self.attn_dec(dec_h)) @ self.attn_v
            _check_finite(scores, "pointer attention scores")
            scores = scores.masked_fill(chosen_mask, float("-inf"))
            log_p = torch.log_softmax(scores, dim=0)
            if mode == "sample":
                probs = torch.softmax(scores, dim=0)
                idx = int(torch.multinomial(probs, 1, generator=generator).item())
            else:
                idx = int(np.argmax(log_p.detach().numpy()))
            log_prob = log_prob + log_p[idx]
            step_log_probs.append(float(log_p[idx].detach()))
            chosen_mask = chosen_mask.clone()
            chosen_mask[idx] = True
            perm.append(idx)
            inp = x[idx]
        return perm, log_prob, step_log_probs


class RewardCritic(nn.Module):
    """Mean-pooled variable embeddings -> 2-layer perceptron -> scalar.

    The input is detached: critic training never reaches the encoder, and the
    policy gradient never reaches the critic.
    """

    def __init__(self, emb_dim=EMBED_WIDTH, hidden=EMBED_WIDTH):
        super().__init__()
        self.lin1 = nn.Linear(emb_dim, hidden, dtype=DTYPE)
        self.lin2 = nn.Linear(hidden, 1, dtype=DTYPE)
        _init_affine(self.lin1.weight, self.lin1.bias)
        _init_affine(self.lin2.weight, self.lin2.bias)

    def predict(self, var_embs):
        pooled = var_embs.detach().mean(dim=0)
        out = self.lin2(torch.relu(self.lin1(pooled))).squeeze(-1)
        _check_finite(out, "critic output")
        return out


# ---------------------------------------------------------------------------
# Parameter container, optimizer step, checkpoints


class PolicyParams:
    """All learnable parameters plus optimizer state and the step counter."""

    def __init__(self, seed=0, lr=1e-4, cons_dim=3, var_dim=3):
        torch.manual_seed(seed)
        self.encoder = GraphEncoder(cons_dim=cons_dim, var_dim=var_dim)
        self.pointer = PointerNetwork()
        self.critic = RewardCritic()
        self.policy_opt = torch.optim.Adam(
            list(self.encoder.parameters()) + list(self.pointer.parameters()), lr=lr
        )
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=lr)
        self.step = 0

    def modules(self):
        return {"encoder": self.encoder, "pointer": self.pointer, "critic": self.critic}

    def policy_parameters(self):
        return list(self.encoder.parameters()) + list(self.pointer.parameters())

    def parameter_fingerprint(self):
        """Order-stable hash of all parameter bytes (for leakage tests)."""
        import hashlib

        digest = hashlib.sha256()
        for name, module in sorted(self.modules().items()):
            for pname, p in sorted(module.state_dict().items()):
                digest.update(name.encode())
                digest.update(pname.encode())
                digest.update(p.detach().numpy().tobytes())
        return digest.hexdigest()


def adam_step(optimizer, parameters, lr, clip_norm=None):
    """Set the learning rate, clip the global gradient L2 norm, and step.

    Parameters with zero gradients are left numerically unchanged by Adam
    (zero first and second moments give a zero update).
    """
    for group in optimizer.param_groups:
        group["lr"] = lr
    if clip_norm is not None:
        nn.utils.clip_grad_norm_(parameters, clip_norm)
    optimizer.step()


def _optimizer_arrays(opt):
    """Flatten optimizer state to name -> little-endian array pairs."""
    out = {}
    state = opt.state_dict()["state"]
    for idx, entry in state.items():
        for key, val in entry.items():
            arr = val.detach().numpy() if torch.is_tensor(val) else np.asarray(val)
            out[f"{idx}.{key}"] = np.ascontiguousarray(arr, dtype=np.dtype(arr.dtype).newbyteorder("<"))
    return out


def _restore_optimizer(opt, arrays, params):
    sd = opt.state_dict()
    state = {}
    for key, arr in arrays.items():
        idx_s, field = key.split(".", 1)
        idx = int(idx_s)
        entry = state.setdefault(idx, {})
        if field == "step":
            entry[field] = torch.tensor(np.asarray(arr).item(), dtype=torch.float32)
        else:
            entry[field] = torch.from_numpy(np.array(arr, dtype=np.float64))
    sd["state"] = state
    opt.load_state_dict(sd)


def save_checkpoint(path, params, rng_state=None, extra=None):
    """Serialize parameters, optimizer moments, step counter and RNG state.

    The container is a compressed npz: every tensor is stored little-endian
    under a stable dotted name, plus a format-version integer.
    """
    payload = {
        "meta.version": np.array([CHECKPOINT_VERSION], dtype="<i8"),
        "meta.step": np.array([params.step], dtype="<i8"),
    }
    for mod_name, module in params.modules().items():
        for pname, tensor in module.state_dict().items():
            arr = tensor.detach().numpy()
            payload[f"module.{mod_name}.{pname}"] = np.ascontiguousarray(
                arr, dtype=np.dtype(arr.dtype).newbyteorder("<")
            )
    for opt_name, opt in (("policy", params.policy_opt), ("critic", params.critic_opt)):
        for key, arr in _optimizer_arrays(opt).items():
            payload[f"optim.{opt_name}.{key}"] = arr
    if rng_state is not None:
        payload["meta.rng"] = np.frombuffer(
            json.dumps(rng_state).encode("utf-8"), dtype=np.uint8
        )
    if extra:
        payload["meta.extra"] = np.frombuffer(json.dumps(extra).encode("utf-8"), dtype=np.uint8)
    np.savez_compressed(path, **payload)


def load_checkpoint(path, params):
    """Restore a checkpoint written by :func:`save_checkpoint` into ``params``.

    Returns (rng_state, extra), either of which may be None.
    """
    with np.load(path, allow_pickle=False) as data:
        keys = set(data.files)
        if "meta.version" not in keys:
            raise CheckpointFormatError("missing format version")
        version = int(data["meta.version"][0])
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        params.step = int(data["meta.step"][0])
        for mod_name, module in params.modules().items():
            sd = module.state_dict()
            new_sd = {}
            for pname, tensor in sd.items():
                key = f"module.{mod_name}.{pname}"
                if key not in keys:
                    raise CheckpointFormatError(f"missing parameter {key}")
                arr = np.array(data[key])
                if tuple(arr.shape) != tuple(tensor.shape):
                    raise CheckpointFormatError(f"shape mismatch for {key}")
                new_sd[pname] = torch.from_numpy(arr.astype(tensor.detach().numpy().dtype))
            module.load_state_dict(new_sd)
        for opt_name, opt in (("policy", params.policy_opt), ("critic", params.critic_opt)):
            prefix = f"optim.{opt_name}."
            arrays = {k[len(prefix) :]: data[k] for k in keys if k.startswith(prefix)}
            if arrays:
                _restore_optimizer(opt, arrays, None)
        rng_state = None
        if "meta.rng" in keys:
            rng_state = json.loads(bytes(data["meta.rng"]).decode("utf-8"))
        extra = None
        if "meta.extra" in keys:
            extra = json.loads(bytes(data["meta.extra"]).decode("utf-8"))
        # frozen prenorms must not re-enter collection mode
        for prenorm in params.encoder.prenorm_modules():
            prenorm.collecting = False
    return rng_state, extra
