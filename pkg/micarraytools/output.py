""" Readers and writers for the files exchanged between processing stages.

Tables (detections, tracks, ground truth) are CSV files handled with pandas;
grid caches, post-filter diagnostics and demixing snapshots are HDF5 files
carrying a ``format_version`` attribute; features, masks and mixtures of
Gaussians are whitespace-separated text matrices.
"""
import glob
import os
import re
import warnings

import h5py
import numpy as np
import pandas as pd
from astropy import log

from . import utils
from .audio_stft import read_wav
from .exceptions import MicArrayError, MicArrayWarning

__all__ = ['FORMAT_VERSION', 'write_grid_cache', 'read_grid_cache',
           'detections_to_dataframe', 'write_detections', 'read_detections',
           'tracks_to_dataframe', 'write_tracks', 'read_tracks',
           'write_truth', 'read_truth', 'write_diagnostics',
           'read_diagnostics', 'diagnostics_summary', 'write_demixing',
           'read_demixing', 'write_matrix', 'read_matrix', 'write_gmm',
           'read_gmm', 'RunArtifacts']

FORMAT_VERSION = 1


def _check_version(h5file, filename):
    version = h5file.attrs.get('format_version')
    if version != FORMAT_VERSION:
        raise MicArrayError('{} has format version {}, expected {}'.format(
            filename, version, FORMAT_VERSION))


def _open(filename):
    if not os.path.isfile(filename):
        raise MicArrayError('file not found: {}'.format(filename))
    try:
        return h5py.File(filename, 'r')
    except OSError as e:
        raise MicArrayError('unreadable HDF5 file {}: {}'.format(filename, e))


def write_grid_cache(filename, grid, key=''):
    """ Store a search grid with its delay table.

    Parameters
    ----------
    filename : str
        HDF5 file
    grid : SphericalGrid
        grid with `tdoa_table` and `pairs` set
    key : str
        identifier of the geometry the table was computed for
    """
    with h5py.File(filename, 'w') as f:
        f.attrs['format_version'] = FORMAT_VERSION
        f.attrs['levels'] = grid.levels
        f.attrs['key'] = key
        f.create_dataset('directions', data=grid.directions)
        f.create_dataset('triangles', data=grid.triangles)
        f.create_dataset('tdoa_table', data=grid.tdoa_table)
        f.create_dataset('pairs', data=grid.pairs)


def read_grid_cache(filename):
    """ Read a grid written by `write_grid_cache`."""
    from .localization import SphericalGrid

    with _open(filename) as f:
        _check_version(f, filename)
        return SphericalGrid(f['directions'][:], f['triangles'][:],
                             int(f.attrs['levels']), f['tdoa_table'][:],
                             f['pairs'][:])


def detections_to_dataframe(detections):
    """ Flatten localisation results into one row per potential source.

    Columns: block, frame, time_s, q, azimuth_deg, elevation_deg, x, y, z,
    energy, probability. Blocks without any source leave no row.
    """
    rows = []
    for d in detections:
        for s in d.sources:
            az, el = utils.cart2sph(s.direction)
            rows.append({'block': d.block, 'frame': d.frame_index,
                         'time_s': d.time, 'q': s.q,
                         'azimuth_deg': float(az), 'elevation_deg': float(el),
                         'x': s.direction[0], 'y': s.direction[1],
                         'z': s.direction[2], 'energy': s.energy,
                         'probability': s.probability})
    columns = ['block', 'frame', 'time_s', 'q', 'azimuth_deg', 'elevation_deg',
               'x', 'y', 'z', 'energy', 'probability']
    return pd.DataFrame(rows, columns=columns)


def write_detections(filename, detections):
    detections_to_dataframe(detections).to_csv(filename, index=False)


def read_detections(filename, block_frames, hop, sample_rate):
    """ Rebuild localisation results from a detections CSV.

    Blocks missing from the file (no source found) are restored empty, so
    the tracker sees every step.

    Parameters
    ----------
    filename : str
        CSV written by `write_detections`
    block_frames, hop, sample_rate : int, int, float
        framing of the localiser that produced the file

    Returns
    -------
    detections : list of Detection
        one per block up to the last block in the file
    """
    from .localization import Detection, PotentialSource

    df = _read_csv(filename)
    nBlocks = int(df['block'].max()) + 1 if len(df) else 0
    detections = [Detection(b, (b + 1)*block_frames - 1,
                            (b + 1)*block_frames*hop/sample_rate)
                  for b in range(nBlocks)]
    for row in df.sort_values(['block', 'q']).itertuples(index=False):
        direction = np.array([row.x, row.y, row.z])
        detections[int(row.block)].sources.append(
            PotentialSource(direction, row.energy, row.probability, int(row.q)))
    return detections


def tracks_to_dataframe(estimates):
    """ Flatten tracker snapshots into one row per track and step.

    Both the current and the delayed estimates are kept; the delayed
    direction columns carry a ``delayed_`` prefix.
    """
    rows = []
    for step in estimates:
        for e in step:
            az, el = utils.cart2sph(e.direction)
            daz, delv = utils.cart2sph(e.delayed_direction)
            rows.append({'step': e.step, 'time_s': e.time,
                         'track_id': e.track_id,
                         'azimuth_deg': float(az), 'elevation_deg': float(el),
                         'x': e.direction[0], 'y': e.direction[1],
                         'z': e.direction[2],
                         'delayed_azimuth_deg': float(daz),
                         'delayed_elevation_deg': float(delv),
                         'delayed_x': e.delayed_direction[0],
                         'delayed_y': e.delayed_direction[1],
                         'delayed_z': e.delayed_direction[2],
                         'existence': e.existence, 'activity': e.activity,
                         'confirmed': int(e.confirmed)})
    columns = ['step', 'time_s', 'track_id', 'azimuth_deg', 'elevation_deg',
               'x', 'y', 'z', 'delayed_azimuth_deg', 'delayed_elevation_deg',
               'delayed_x', 'delayed_y', 'delayed_z', 'existence', 'activity',
               'confirmed']
    return pd.DataFrame(rows, columns=columns)


def write_tracks(filename, estimates):
    tracks_to_dataframe(estimates).to_csv(filename, index=False)


def _read_csv(filename, required=()):
    if not os.path.isfile(filename):
        raise MicArrayError('file not found: {}'.format(filename))
    try:
        df = pd.read_csv(filename)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise MicArrayError('cannot parse {}: {}'.format(filename, e))
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise MicArrayError('{} lacks columns {}'.format(filename,
                                                         ', '.join(missing)))
    return df


def read_tracks(filename):
    """ Read a tracks CSV into a DataFrame."""
    return _read_csv(filename, ['step', 'time_s', 'track_id', 'x', 'y', 'z',
                                'activity', 'confirmed'])


def write_truth(filename, truth):
    """ Write the trajectories of a `~micarraytools.simulator.GroundTruth`."""
    truth.to_dataframe().to_csv(filename, index=False)


def read_truth(filename):
    return _read_csv(filename, ['time_s', 'source_id', 'azimuth_deg',
                                'elevation_deg', 'distance_m', 'active'])


def write_diagnostics(filename, diagnostics, sample_rate, frame_length,
                      n_frames):
    """ Store post-filter diagnostics.

    Parameters
    ----------
    filename : str
        HDF5 file
    diagnostics : dict
        output of `~micarraytools.postfilter.PostFilter.diagnostic_arrays`
    n_frames : int
        total number of STFT frames of the recording
    """
    with h5py.File(filename, 'w') as f:
        f.attrs['format_version'] = FORMAT_VERSION
        f.attrs['sample_rate'] = sample_rate
        f.attrs['frame_length'] = frame_length
        f.attrs['n_frames'] = n_frames
        for sid, fields in diagnostics.items():
            group = f.create_group('source_{}'.format(sid))
            for name, data in fields.items():
                group.create_dataset(name, data=data, compression='gzip')


def read_diagnostics(filename):
    """ Read post-filter diagnostics.

    Returns
    -------
    diagnostics : dict
        per source id a dict of arrays
    attrs : dict
        sample_rate, frame_length and n_frames
    """
    with _open(filename) as f:
        _check_version(f, filename)
        attrs = {'sample_rate': float(f.attrs['sample_rate']),
                 'frame_length': int(f.attrs['frame_length']),
                 'n_frames': int(f.attrs['n_frames'])}
        diagnostics = {}
        for name, group in f.items():
            sid = int(name.split('_', 1)[1])
            diagnostics[sid] = {key: group[key][:] for key in group}
    return diagnostics, attrs


def diagnostics_summary(diagnostics):
    """ Per-frame averages of the post-filter diagnostics as a table."""
    frames = []
    for sid, fields in diagnostics.items():
        data = {'source_id': sid, 'frame': fields['frame']}
        for name, values in fields.items():
            if name != 'frame':
                data['mean_' + name] = values.mean(axis=1) if len(values) \
                    else np.zeros(0)
        frames.append(pd.DataFrame(data))
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def write_demixing(filename, W, source_ids):
    """ Store demixing matrices W of shape (K, M, N) and their row ids."""
    with h5py.File(filename, 'w') as f:
        f.attrs['format_version'] = FORMAT_VERSION
        f.create_dataset('W', data=W, compression='gzip')
        f.create_dataset('source_ids', data=np.asarray(source_ids, dtype=int))


def read_demixing(filename):
    with _open(filename) as f:
        _check_version(f, filename)
        return f['W'][:], list(f['source_ids'][:])


def write_matrix(filename, matrix, header='', integer=False):
    """ Write a frames-by-dimensions matrix as text, one frame per line."""
    np.savetxt(filename, np.atleast_2d(matrix), fmt='%d' if integer else '%.6e',
               header=header)


def read_matrix(filename):
    if not os.path.isfile(filename):
        raise MicArrayError('file not found: {}'.format(filename))
    return np.atleast_2d(np.loadtxt(filename))


def write_gmm(filename, gmm):
    """ Write a mixture as text.

    One line per component: the weight, D means and D variances.
    """
    table = np.hstack([gmm.weights[:, np.newaxis], gmm.means, gmm.variances])
    np.savetxt(filename, table, fmt='%.10e', header='DiagonalGmm {} {}'.format(
        gmm.n_components, gmm.n_dims))


def read_gmm(filename):
    """ Read a mixture written by `write_gmm`."""
    from .features_mft import DiagonalGmm

    table = read_matrix(filename)
    if table.shape[1] % 2 != 1:
        raise MicArrayError('{} is not a mixture table'.format(filename))
    D = table.shape[1]//2
    return DiagonalGmm(table[:, 0], table[:, 1:D + 1], table[:, D + 1:])


class RunArtifacts():
    """ The files of one processing run in a directory.

    Scene files: ``mixture.wav``, ``source_<i>.wav`` (dry signals),
    ``stem_<i>.wav`` (images at all microphones), ``truth.csv``.
    Localisation: ``detections.csv``, ``tracks.csv``. Separation:
    ``separated_<id>.wav``, ``reference_<id>_<i>.wav``, ``postfilter.h5``,
    ``demixing.h5``. Features: ``features_<id>.txt``, ``mask_<id>.txt``.
    """
    MIXTURE = 'mixture.wav'
    TRUTH = 'truth.csv'
    DETECTIONS = 'detections.csv'
    TRACKS = 'tracks.csv'
    DIAGNOSTICS = 'postfilter.h5'
    DEMIXING = 'demixing.h5'

    def __init__(self, directory):
        self.dir = directory

    def path(self, name, *ids):
        """ Path of an artifact; ``path('stem', 2)`` gives ``stem_2.wav``."""
        if ids:
            ext = 'txt' if name in ('features', 'mask') else 'wav'
            name = '{}_{}.{}'.format(name, '_'.join(str(i) for i in ids), ext)
        return os.path.join(self.dir, name)

    def makedirs(self):
        os.makedirs(self.dir, exist_ok=True)
        return self

    def _indices(self, pattern):
        regex = re.compile(pattern.replace('*', r'(\d+)') + '$')
        out = []
        for f in glob.glob(os.path.join(self.dir, pattern)):
            match = regex.match(os.path.basename(f))
            if match:
                out.append(tuple(int(g) for g in match.groups()))
        return sorted(out)

    def source_indices(self):
        return [i for i, in self._indices('source_*.wav')]

    def separated_ids(self):
        return [i for i, in self._indices('separated_*.wav')]

    def mixture(self):
        return read_wav(self.path(self.MIXTURE))

    def stems(self):
        """Clean images of every source, shape (M, N, n)."""
        indices = self.source_indices() or [i for i, in
                                            self._indices('stem_*.wav')]
        if not indices:
            warnings.warn('no stems in {}'.format(self.dir), MicArrayWarning)
            return np.zeros((0, 0, 0))
        return np.array([read_wav(self.path('stem', i)).samples
                         for i in indices])

    def sources(self):
        """Dry source signals, shape (M, n)."""
        return np.array([read_wav(self.path('source', i)).samples[0]
                         for i in self.source_indices()])

    def separated(self):
        """Separated signals by track id."""
        out = {sid: read_wav(self.path('separated', sid)).samples[0]
               for sid in self.separated_ids()}
        if not out:
            warnings.warn('no separated signals in {}'.format(self.dir),
                          MicArrayWarning)
        return out

    def references(self):
        """GSS-filtered stems as {track id: {source index: signal}}."""
        out = {}
        for sid, i in self._indices('reference_*_*.wav'):
            out.setdefault(sid, {})[i] = read_wav(
                self.path('reference', sid, i)).samples[0]
        return out

    def truth(self):
        return read_truth(self.path(self.TRUTH))

    def tracks(self):
        return read_tracks(self.path(self.TRACKS))

    def diagnostics(self):
        log.debug('Reading post-filter diagnostics from {}'.format(self.dir))
        return read_diagnostics(self.path(self.DIAGNOSTICS))
