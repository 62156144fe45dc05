"""The full detector: backbone, tilt-series encoder, prompt encoder,
query initializer, and 3D decoder, producing M scored 3D detections."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..geometry import TomogramDims
from ..sim import PromptSet
from .backbone import ConvBackbone, normalize_stack
from .config import ModelConfig
from .decoder import BoxRefineHead, DecoderLayer, ScoreHead
from .prompting import PromptEncoder
from .queries import QueryInitializer, inverse_sigmoid
from .tilt_encoder import TiltSeriesEncoder


@dataclass
class DenoisingQueries:
    """Extra supervised queries built from jittered ground truth.

    ``boxes_sig``: (D, 4) normalized boxes; ``label_indices``: (D,) row index
    into the prototype matrix used as the content seed; ``group_sizes``:
    query count per isolation group (sums to D).
    """

    boxes_sig: torch.Tensor
    label_indices: torch.Tensor
    group_sizes: list[int]


@dataclass
class Detection:
    x: float
    y: float
    z: float
    d: float
    class_label: int
    score: float


def prompts_to_lists(prompts: PromptSet, n_tilts: int, dims: TomogramDims):
    boxes = [[] for _ in range(n_tilts)]
    labels = [[] for _ in range(n_tilts)]
    for b in prompts.items:
        if not 0 <= b.tilt_index < n_tilts:
            raise ValueError(f"prompt tilt index {b.tilt_index} out of range")
        boxes[b.tilt_index].append((b.x / dims.w, b.y / dims.h, b.d / dims.w, b.d / dims.w))
        labels[b.tilt_index].append(b.class_label)
    return boxes, labels


def build_self_attn_mask(group_sizes: list[int], n_matching: int, device) -> torch.Tensor:
    """Block-diagonal permission mask: each denoising group sees only itself,
    matching queries see only each other."""
    total = sum(group_sizes) + n_matching
    allowed = torch.zeros(total, total, dtype=torch.bool, device=device)
    off = 0
    for size in group_sizes:
        allowed[off : off + size, off : off + size] = True
        off += size
    allowed[off:, off:] = True
    return allowed


class FullTiltNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.l_d < 1:
            raise ValueError("decoder needs at least one layer")
        self.cfg = cfg
        self.backbone = ConvBackbone(cfg.c, cfg.strides)
        self.tilt_encoder = TiltSeriesEncoder(cfg)
        self.prompt_encoder = PromptEncoder(cfg)
        self.query_init = QueryInitializer(cfg)
        self.decoder_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.l_d))
        self.box_head = BoxRefineHead(cfg.c)
        self.score_head = ScoreHead()
        self.dn_embed = nn.Parameter(torch.zeros(cfg.c))
        nn.init.normal_(self.dn_embed, std=0.02)

    @property
    def dtype(self):
        return self.dn_embed.dtype

    def encode(self, images: torch.Tensor, angles_deg: torch.Tensor) -> list[torch.Tensor]:
        normalized = normalize_stack(images.to(self.dtype))
        pyramid = self.backbone(normalized)
        return self.tilt_encoder(pyramid, angles_deg.to(self.dtype))

    def forward(
        self,
        images: torch.Tensor,
        angles_deg: torch.Tensor,
        dims: TomogramDims,
        prompts: PromptSet | None = None,
        prototypes: tuple[torch.Tensor, list[int]] | None = None,
        denoising: DenoisingQueries | None = None,
    ) -> dict:
        if (prompts is None) == (prototypes is None):
            raise ValueError("provide exactly one of prompts or prototypes")
        images = torch.as_tensor(images)
        angles_deg = torch.as_tensor(angles_deg, dtype=self.dtype)
        n_tilts = images.shape[0]
        if angles_deg.shape[0] != n_tilts:
            raise ValueError("angle count must match image count")

        feats = self.encode(images, angles_deg)

        if prompts is not None:
            boxes_pt, labels_pt = prompts_to_lists(prompts, n_tilts, dims)
            class_labels = sorted({l for ls in labels_pt for l in ls})
            protos = self.prompt_encoder.forward_with_classes(
                boxes_pt, labels_pt, class_labels, feats, aspect=dims.w / dims.h
            )
        else:
            protos, class_labels = prototypes
            protos = torch.as_tensor(protos, dtype=self.dtype)
            class_labels = list(class_labels)

        # nearest-zero tilt; argmin takes the first occurrence on ties
        i_star = int(torch.argmin(angles_deg.abs()))
        z_star = [f[i_star] for f in feats]
        init = self.query_init(z_star, protos, self.score_head.bias)

        theta = torch.deg2rad(angles_deg)
        cos_t, sin_t = theta.cos(), theta.sin()

        content = init["content"]
        anchor_logits = init["anchor_logits"]
        n_match = content.shape[0]

        self_mask = None
        dn_count = 0
        if denoising is not None and len(denoising.group_sizes) > 0:
            dn_boxes = denoising.boxes_sig.to(self.dtype)
            dn_content = protos[denoising.label_indices] + self.dn_embed
            content = torch.cat([dn_content, content])
            anchor_logits = torch.cat([inverse_sigmoid(dn_boxes), anchor_logits])
            self_mask = build_self_attn_mask(denoising.group_sizes, n_match, content.device)
            dn_count = dn_boxes.shape[0]

        detach = self.cfg.detach_anchors
        chain = anchor_logits.detach() if detach else anchor_logits
        tilt_embeds = self.tilt_encoder.tilt_embed(angles_deg)
        layers_out, dn_layers_out = [], []
        for layer in self.decoder_layers:
            anchors_att = torch.sigmoid(chain.detach() if detach else chain)
            content = layer(content, anchors_att, protos, feats, cos_t, sin_t, dims,
                            self_mask, tilt_embeds)
            delta = self.box_head(content)
            sup_logits = delta + chain
            boxes = torch.sigmoid(sup_logits)
            logits = self.score_head(content, protos)
            layers_out.append((boxes[dn_count:], logits[dn_count:]))
            if dn_count:
                dn_layers_out.append((boxes[:dn_count], logits[:dn_count]))
            chain = delta + (chain.detach() if detach else chain)

        final_boxes, final_logits = layers_out[-1]
        return {
            "boxes": final_boxes,
            "logits": final_logits,
            "layers": layers_out,
            "dn_layers": dn_layers_out if dn_count else None,
            "enc_boxes": init["enc_boxes"],
            "enc_logits": init["enc_logits"],
            "top_indices": init["top_indices"],
            "prototypes": protos,
            "class_labels": class_labels,
            "i_star": i_star,
        }


def to_detections(output: dict) -> list[Detection]:
    """Final-layer outputs -> M scored detections in normalized coordinates."""
    probs = torch.sigmoid(output["logits"]).detach()
    scores, best = probs.max(dim=-1)
    labels = [output["class_labels"][int(b)] for b in best]
    boxes = output["boxes"].detach()
    return [
        Detection(
            x=float(boxes[i, 0]),
            y=float(boxes[i, 1]),
            z=float(boxes[i, 2]),
            d=float(boxes[i, 3]),
            class_label=labels[i],
            score=float(scores[i]),
        )
        for i in range(boxes.shape[0])
    ]


def build_model(cfg: ModelConfig) -> FullTiltNet:
    """Construct with deterministic parameter initialization."""
    torch.manual_seed(cfg.seed)
    return FullTiltNet(cfg)
