#!/usr/bin/env python3
"""Export a Keras pretrained-model architecture as a scheduling graph file.

Writes the JSON graph format consumed by the pipesched toolkit: one node per
layer with ``memory_bytes`` equal to the layer's parameter count (INT8
deployment convention: one byte per parameter) and one edge per layer
connection. Only the architecture is needed, so no weight files are
downloaded.

Usage: export_model.py --model ResNet50 --out resnet50.json
"""

import argparse
import json
import sys


def _builders():
    # imported lazily so --help works without tensorflow installed
    from keras import applications as apps

    return {
        "Xception": apps.Xception,
        "ResNet50": apps.ResNet50,
        "ResNet101": apps.ResNet101,
        "ResNet152": apps.ResNet152,
        "ResNet101V2": apps.ResNet101V2,
        "ResNet152V2": apps.ResNet152V2,
        "DenseNet121": apps.DenseNet121,
        "DenseNet169": apps.DenseNet169,
        "DenseNet201": apps.DenseNet201,
        "InceptionResNetV2": apps.InceptionResNetV2,
    }


def _parent_layer_names(layer) -> list[str]:
    """Names of the layers feeding `layer`, in input order, deduplicated."""
    names: list[str] = []
    for node in layer._inbound_nodes:
        tensors = node.input_tensors
        if not isinstance(tensors, (list, tuple)):
            tensors = [tensors]
        for t in tensors:
            op = t._keras_history[0]
            if op is not None and op.name != layer.name and op.name not in names:
                names.append(op.name)
    return names


def model_to_graph(model) -> dict:
    index_of = {layer.name: i for i, layer in enumerate(model.layers)}
    nodes = [
        {"op": layer.name, "memory_bytes": int(layer.count_params())}
        for layer in model.layers
    ]
    edges = []
    for layer in model.layers:
        child = index_of[layer.name]
        for pname in _parent_layer_names(layer):
            edges.append([index_of[pname], child])
    return {"name": model.name, "nodes": nodes, "edges": edges}


def export_model(model_name: str, out_path: str) -> dict:
    builders = _builders()
    if model_name not in builders:
        supported = ", ".join(sorted(builders))
        raise ValueError(
            f"unknown model {model_name!r}; supported models: {supported}")
    model = builders[model_name](weights=None)
    graph = model_to_graph(model)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(graph, fh, indent=1)
        fh.write("\n")
    max_indeg = 0
    indeg = [0] * len(graph["nodes"])
    for _, v in graph["edges"]:
        indeg[v] += 1
    max_indeg = max(indeg) if indeg else 0
    print(f"{model_name}: {len(graph['nodes'])} nodes, "
          f"{len(graph['edges'])} edges, max in-degree {max_indeg} -> {out_path}")
    return graph


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", required=True,
                        help="architecture name, e.g. ResNet50")
    parser.add_argument("--out", required=True, help="output graph JSON path")
    args = parser.parse_args(argv)
    try:
        export_model(args.model, args.out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
