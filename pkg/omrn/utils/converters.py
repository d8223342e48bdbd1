import json
import logging
import os
import struct

import numpy as np
from joblib import Parallel, delayed

from omrn.utils.filters import DatasetError, validate_sample
from omrn.utils.geometry import BoundingBox, Segment

logger = logging.getLogger(__name__)

MAGIC = b"OMRN"
MANIFEST_VERSION = 1


class VideoSample(object):
    """
    A single video-sentence pair with its spatio-temporal ground truth.
    Frame indices of `gt_segment` are 1-based and inclusive.
    """

    def __init__(self,
                 sample_id,
                 regions,
                 boxes,
                 words,
                 embeddings,
                 noun_indices,
                 gt_segment,
                 gt_boxes,
                 sentence_type='declarative'):
        self.sample_id = sample_id
        self.regions = regions
        self.boxes = boxes
        self.words = list(words)
        self.embeddings = embeddings
        self.noun_indices = list(noun_indices)
        self.gt_segment = Segment(*gt_segment)
        self.gt_boxes = np.asarray(gt_boxes, dtype=np.float32).reshape(-1, 4)
        self.sentence_type = sentence_type

    @property
    def num_frames(self):
        return self.regions.shape[0]

    @property
    def num_regions(self):
        return self.regions.shape[1]

    def gt_box(self, frame):
        """Ground truth BoundingBox of a 1-based frame inside the segment."""
        return BoundingBox(*self.gt_boxes[frame - self.gt_segment.s])

    def __str__(self):
        return self.__repr__()

    def __repr__(self):
        s = ""
        s += "sample_id: %s" % (self.sample_id)
        s += ", regions: %s" % (self.regions.shape,)
        s += ", words: %d" % (len(self.words))
        s += ", noun_indices: %s" % (self.noun_indices)
        s += ", gt_segment: [%d, %d]" % (self.gt_segment.s, self.gt_segment.e)
        s += ", sentence_type: %s" % (self.sentence_type)
        return s


class DatasetManifest(object):
    """Sample records of a dataset, its global dims and split tag."""

    def __init__(self, records, dims, split='train', root='.', embedding_table=None):
        self.records = records
        self.dims = dims
        self.split = split
        self.root = root
        self.embedding_table = embedding_table

    def __len__(self):
        return len(self.records)

    def to_json(self):
        return {'version': MANIFEST_VERSION,
                'split': self.split,
                'dims': self.dims,
                'embedding_table': self.embedding_table,
                'samples': self.records}


def write_tensor(path, array):
    """Writes an array as little-endian float32 behind the OMRN header."""
    array = np.ascontiguousarray(array, dtype='<f4')
    header = MAGIC + struct.pack('<B', array.ndim) + struct.pack('<%dI' % array.ndim, *array.shape)
    with open(path, 'wb') as f:
        f.write(header)
        f.write(array.tobytes(order='C'))


def read_tensor(path):
    """Reads a tensor written by `write_tensor` into a native float32 array."""
    if not os.path.exists(path):
        raise DatasetError("Tensor file not found: {}".format(path))
    with open(path, 'rb') as f:
        data = f.read()

    if data[:4] != MAGIC:
        raise DatasetError("Bad magic bytes in {}".format(path))
    if len(data) < 5:
        raise DatasetError("Truncated header in {}".format(path))
    ndim = struct.unpack_from('<B', data, 4)[0]
    offset = 5 + 4 * ndim
    if len(data) < offset:
        raise DatasetError("Truncated header in {}: {} dimensions need {} bytes, file has {}".format(
            path, ndim, offset, len(data)))
    shape = struct.unpack_from('<%dI' % ndim, data, 5)
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    if len(data) - offset != expected:
        raise DatasetError("Payload of {} has {} bytes, header declares {}".format(
            path, len(data) - offset, expected))

    return np.frombuffer(data, dtype='<f4', offset=offset).reshape(shape).astype(np.float32)


def write_dataset(samples, output_dir, split='train', embedding_table=None):
    """
    Writes samples as tensor files plus a JSON manifest.

    Parameters
    ----------
    samples : list of VideoSample
    output_dir : str
    split : str, optional
        split tag stored in the manifest (the default is 'train')
    embedding_table : numpy.ndarray, optional
        shared [V x D_w] table; when given, per-sample embedding files are not written
        and embeddings are looked up from word ids at load time

    Returns
    -------
    manifest_path : str
    """

    output_dir = os.path.expanduser(output_dir)
    if not os.path.exists(output_dir):
        os.makedirs(output_dir)

    if not samples:
        raise DatasetError("Cannot write an empty dataset")

    records = []
    for sample in samples:
        record = {'id': sample.sample_id,
                  'regions': '{}.regions.omrn'.format(sample.sample_id),
                  'boxes': '{}.boxes.omrn'.format(sample.sample_id),
                  'words': [int(w) for w in sample.words],
                  'noun_indices': [int(i) for i in sample.noun_indices],
                  'sentence_type': sample.sentence_type,
                  'gt_segment': [sample.gt_segment.s, sample.gt_segment.e],
                  'gt_boxes': [[float(v) for v in box] for box in sample.gt_boxes]}
        write_tensor(os.path.join(output_dir, record['regions']), sample.regions)
        write_tensor(os.path.join(output_dir, record['boxes']), sample.boxes)
        if embedding_table is None:
            record['embeddings'] = '{}.embeddings.omrn'.format(sample.sample_id)
            write_tensor(os.path.join(output_dir, record['embeddings']), sample.embeddings)
        records.append(record)

    table_name = None
    if embedding_table is not None:
        table_name = 'embedding_table.omrn'
        write_tensor(os.path.join(output_dir, table_name), embedding_table)

    dims = {'max_frames': max(s.num_frames for s in samples),
            'regions': samples[0].num_regions,
            'region_dim': samples[0].regions.shape[2],
            'word_dim': samples[0].embeddings.shape[1]}

    manifest = DatasetManifest(records, dims, split=split, root=output_dir,
                               embedding_table=table_name)
    manifest_path = os.path.join(output_dir, 'manifest.json')
    with open(manifest_path, 'w') as outfile:
        json.dump(manifest.to_json(), outfile, indent=2, sort_keys=True)

    logger.info("Wrote %d samples to %s", len(samples), manifest_path)
    return manifest_path


def _load_record(record, root, dims, table):
    sid = record.get('id', '<unnamed>')
    try:
        regions = read_tensor(os.path.join(root, record['regions']))
        boxes = read_tensor(os.path.join(root, record['boxes']))
        words = record['words']
        if table is not None:
            if any(w < 0 or w >= table.shape[0] for w in words):
                raise DatasetError("Sample {}: word id outside embedding table of size {}".format(
                    sid, table.shape[0]))
            embeddings = table[np.asarray(words, dtype=np.int64)]
        else:
            embeddings = read_tensor(os.path.join(root, record['embeddings']))
        s, e = record['gt_segment']
        if s > e:
            raise DatasetError("Sample {}: ground truth start {} is after end {}".format(sid, s, e))
        sample = VideoSample(sample_id=sid,
                             regions=regions,
                             boxes=boxes,
                             words=words,
                             embeddings=embeddings,
                             noun_indices=record['noun_indices'],
                             gt_segment=(s, e),
                             gt_boxes=record['gt_boxes'],
                             sentence_type=record.get('sentence_type', 'declarative'))
    except KeyError as missing:
        raise DatasetError("Sample {}: missing field {}".format(sid, missing))

    return validate_sample(sample, dims)


def load_dataset(manifest_path, n_jobs=1):
    """
    Loads a dataset written by `write_dataset` or by another tool using the same format.

    Parameters
    ----------
    manifest_path : str
        path to manifest.json; tensor paths are relative to its directory
    n_jobs : int, optional
        number of joblib workers reading samples (the default is 1)

    Returns
    -------
    manifest : DatasetManifest
    samples : list of VideoSample

    Examples
    --------
    >>> from omrn.utils.converters import load_dataset
    >>> manifest, samples = load_dataset('data/synthetic/manifest.json')
    """

    if not os.path.exists(manifest_path):
        raise DatasetError("Manifest not found: {}".format(manifest_path))
    with open(manifest_path) as f:
        data = json.load(f)

    root = os.path.dirname(os.path.abspath(manifest_path))
    try:
        manifest = DatasetManifest(records=data['samples'],
                                   dims=data['dims'],
                                   split=data.get('split', 'train'),
                                   root=root,
                                   embedding_table=data.get('embedding_table'))
    except KeyError as missing:
        raise DatasetError("Manifest {} is missing field {}".format(manifest_path, missing))

    table = None
    if manifest.embedding_table:
        table = read_tensor(os.path.join(root, manifest.embedding_table))

    samples = Parallel(n_jobs=n_jobs)(
        delayed(_load_record)(record, root, manifest.dims, table) for record in manifest.records)

    logger.info("Loaded %d %s samples from %s", len(samples), manifest.split, manifest_path)
    return manifest, samples


def write_predictions(predictions, path):
    """
    Writes predictions as JSON keyed by sample id.

    Parameters
    ----------
    predictions : dict
        sample id -> omrn.grounder.localizer.Prediction
    path : str
    """
    json_data = {}
    for sid in sorted(predictions):
        prediction = predictions[sid]
        json_data[sid] = {'segment': [prediction.segment.s, prediction.segment.e],
                          'boxes': [[float(v) for v in box] for box in prediction.boxes],
                          'confidence': float(prediction.confidence)}
    with open(path, 'w') as outfile:
        json.dump(json_data, outfile, indent=2, sort_keys=True)


def read_predictions(path):
    """Reads a predictions JSON file into {sample id: (Segment, [BoundingBox, ...])}."""
    if not os.path.exists(path):
        raise DatasetError("Predictions file not found: {}".format(path))
    with open(path) as f:
        json_data = json.load(f)

    predictions = {}
    for sid, entry in json_data.items():
        segment = Segment(*entry['segment'])
        boxes = [BoundingBox(*box) for box in entry['boxes']]
        if len(boxes) != len(segment):
            raise DatasetError("Prediction {}: {} boxes for a segment of {} frames".format(
                sid, len(boxes), len(segment)))
        predictions[sid] = (segment, boxes)
    return predictions
