"""pixelmeta-export: one-shot batch export into the interchange format.

Exit codes: 0 success, 1 configuration/schema error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ExportError
from .job import ExportJob, export_dataset, read_image_list
from .splits import pascal5i_split


def _read_names(path: str) -> list[str]:
    names = [line.strip() for line in Path(path).read_text().splitlines()]
    return [n for n in names if n and not n.startswith("#")]


def _resolve_split(args, class_names):
    if args.pascal5i is not None:
        return pascal5i_split(args.pascal5i)
    if args.base_classes and args.novel_classes:
        return _read_names(args.base_classes), _read_names(args.novel_classes)
    raise ExportError(
        "need either --pascal5i FOLD or both --base-classes and --novel-classes"
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pixelmeta-export", description=__doc__)
    p.add_argument("--images", required=True, help="CSV of `id,image_path` rows")
    p.add_argument("--labels", required=True,
                   help="CSV of `id,name;name[,gt_mask_path]` rows")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=129)
    p.add_argument("--cam-ckpt", required=True, help="TorchScript CAM classifier")
    p.add_argument("--feat-ckpt", required=True, help="TorchScript feature trunk")
    p.add_argument("--sal-ckpt", required=True, help="TorchScript saliency net")
    p.add_argument("--embed", required=True, help="fastText-style .vec file")
    p.add_argument("--class-names", required=True,
                   help="file of segmentation class names, one per line")
    p.add_argument("--cam-names", required=True,
                   help="file of CAM class names in model-channel order")
    p.add_argument("--pascal5i", type=int, choices=[0, 1, 2, 3],
                   help="use the canonical 4-way even split, fold i")
    p.add_argument("--base-classes", help="file of base class names")
    p.add_argument("--novel-classes", help="file of novel class names")
    p.add_argument("--sal-activation", choices=["sigmoid", "minmax", "none"],
                   default="sigmoid")
    p.add_argument("--void-value", type=int, default=255,
                   help="mask pixel value mapped to the ignore label")
    p.add_argument("--cam-excluded",
                   help="file recording classes removed from CAM pretraining")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        class_names = _read_names(args.class_names)
        base, novel = _resolve_split(args, class_names)
        job = ExportJob(
            images=read_image_list(args.images, args.labels),
            class_names=class_names,
            cam_class_names=_read_names(args.cam_names),
            base_classes=base,
            novel_classes=novel,
            out_dir=Path(args.out),
            size=args.size,
            cam_ckpt=Path(args.cam_ckpt),
            feat_ckpt=Path(args.feat_ckpt),
            sal_ckpt=Path(args.sal_ckpt),
            embed_path=Path(args.embed),
            sal_activation=args.sal_activation,
            void_value=args.void_value,
            cam_excluded=_read_names(args.cam_excluded) if args.cam_excluded else [],
        )
        manifest = export_dataset(job)
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
