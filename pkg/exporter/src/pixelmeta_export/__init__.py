"""Bridge pretrained backbones into the pixelmeta interchange format."""

__version__ = "0.1.0"

from .embeddings import embed_names, load_word_vectors, name_tokens
from .job import (
    ExportJob,
    ImageEntry,
    export_dataset,
    export_embeddings,
    export_features,
    export_heatmaps,
    export_saliency,
    read_image_list,
    write_manifest,
)
from .models import cam_heatmaps, feature_map, load_torchscript, saliency_map
from .splits import PASCAL_VOC_CLASSES, pascal5i_split
from .tensor_writer import read_tensor, write_tensor
