""" Diagnostic figures of localisation, tracking and missing-feature masks.
"""
import matplotlib as mpl
import matplotlib.pyplot as plt
import numpy as np
import seaborn as sns

__all__ = ['get_colorPalette', 'styleplots', 'probability_class',
           'plot_detections', 'plot_tracks', 'plot_mask', 'plot_localization']

PROBABILITY_CLASSES = ('P > 0.5', '0.2 < P < 0.5', 'P < 0.2')


def get_colorPalette():
    """ return the color palette for tracks."""
    return ['#008fd5', '#fc4f30', '#e5ae38',
            '#810f7c', '#029e73', '#00035b',
            '#8b8b8b', '#fe828c', '#005249']


def styleplots():
    """ rc settings of all figures, to be used with `matplotlib.rc_context`."""
    spinewidth = 1.2
    return {'font.size': 9,
            'legend.handlelength': 0.75,
            'legend.handletextpad': 0.5,
            'figure.dpi': 100,
            'lines.linewidth': 1.5,
            'axes.linewidth': spinewidth,
            'xtick.major.width': spinewidth,
            'ytick.major.width': spinewidth,
            'image.cmap': 'inferno',
            'savefig.bbox': 'tight',
            'savefig.dpi': 200,
            'axes.prop_cycle': mpl.cycler(color=get_colorPalette())}


def probability_class(p):
    """ Label detections by confidence.

    Example
    -------
    >>> probability_class(np.array([0.9, 0.3, 0.1])).tolist()
    ['P > 0.5', '0.2 < P < 0.5', 'P < 0.2']
    """
    p = np.asarray(p, dtype=float)
    return np.where(p > 0.5, PROBABILITY_CLASSES[0],
                    np.where(p >= 0.2, PROBABILITY_CLASSES[1],
                             PROBABILITY_CLASSES[2]))


def _truth_lines(ax, truth, column='azimuth_deg'):
    for sid, rows in truth.groupby('source_id'):
        active = rows[column].where(rows['active'].astype(bool))
        ax.plot(rows['time_s'], active, color='black', ls='--', lw=1.,
                label='truth' if sid == truth['source_id'].min() else None)


def plot_detections(detections, truth=None, ax=None, column='azimuth_deg'):
    """ Plot beamformer detections over time.

    Detections are shaded by their probability class.

    Parameters
    ----------
    detections : pandas DataFrame
        table as written by `~micarraytools.output.write_detections`
    truth : pandas DataFrame, optional
        ground-truth table drawn as dashed lines
    ax : matplotlib axis, optional
        axis to draw on
    column : str
        'azimuth_deg' or 'elevation_deg'

    Returns
    -------
    ax : matplotlib axis
        axis with the plot
    """
    if ax is None:
        fig, ax = plt.subplots()
    df = detections.assign(confidence=probability_class(
        detections['probability']))
    palette = dict(zip(PROBABILITY_CLASSES, ['black', '0.5', '0.85']))
    if len(df):
        sns.scatterplot(data=df, x='time_s', y=column, hue='confidence',
                        hue_order=PROBABILITY_CLASSES, palette=palette, s=6,
                        linewidth=0, ax=ax)
    if truth is not None:
        _truth_lines(ax, truth, column)
    ax.set_xlabel('Time [s]')
    ax.set_ylabel('Azimuth [deg]' if column == 'azimuth_deg'
                  else 'Elevation [deg]')
    return ax


def plot_tracks(tracks, truth=None, ax=None, delayed=False,
                confirmed_only=True):
    """ Plot track azimuths over time, one color per track.

    Parameters
    ----------
    tracks : pandas DataFrame
        table as written by `~micarraytools.output.write_tracks`
    truth : pandas DataFrame, optional
        ground truth for comparison
    delayed : bool
        plot the delayed instead of the current estimates
    confirmed_only : bool
        omit tracks that are not confirmed

    Returns
    -------
    ax : matplotlib axis
        axis with the plot
    """
    if ax is None:
        fig, ax = plt.subplots()
    df = tracks[tracks['confirmed'].astype(bool)] if confirmed_only else tracks
    y = 'delayed_azimuth_deg' if delayed else 'azimuth_deg'
    if len(df):
        df = df.assign(track=df['track_id'].astype(str))
        palette = sns.color_palette(get_colorPalette(), df['track'].nunique())
        sns.scatterplot(data=df, x='time_s', y=y, hue='track', palette=palette,
                        s=8, linewidth=0, ax=ax)
    if truth is not None:
        _truth_lines(ax, truth)
    ax.set_xlabel('Time [s]')
    ax.set_ylabel('Azimuth [deg]')
    ax.set_ylim(-180, 180)
    return ax


def plot_mask(mask, ax=None, delta=False):
    """ Show a missing-feature mask as an image.

    Parameters
    ----------
    mask : FeatureMask
        mask to show
    delta : bool
        show the delta-feature mask

    Returns
    -------
    ax : matplotlib axis
        axis with the plot
    """
    if ax is None:
        fig, ax = plt.subplots()
    data = mask.delta if delta else mask.binary
    ax.imshow(np.asarray(data).T, origin='lower', aspect='auto',
              cmap='gray_r', vmin=0, vmax=1, interpolation='nearest')
    ax.set_xlabel('Frame')
    ax.set_ylabel('Mel band')
    return ax


def plot_localization(detections, tracks, truth=None, filename=None):
    """ Detections and tracks in two panels.

    Parameters
    ----------
    detections, tracks : pandas DataFrame
        localisation tables
    truth : pandas DataFrame, optional
        ground truth
    filename : str, optional
        save the figure there and close it

    Returns
    -------
    fig : matplotlib figure
        the figure
    """
    with mpl.rc_context(styleplots()):
        fig, axs = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
        plot_detections(detections, truth, axs[0])
        plot_tracks(tracks, truth, axs[1])
        axs[0].set_xlabel('')
        if filename is not None:
            fig.savefig(filename)
            plt.close(fig)
    return fig
