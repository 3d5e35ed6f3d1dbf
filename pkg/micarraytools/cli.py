""" Command-line front end ``micarray``.

Subcommands run one stage each and exchange files:

    micarray simulate --fixture three-static --out scene/
    micarray localize scene/mixture.wav --out run/ --plot
    micarray separate scene/mixture.wav --tracks run/tracks.csv --out run/
    micarray featurize run/separated_0.wav --diagnostics run/postfilter.h5
    micarray eval --separated run/ --scene scene/
"""
import argparse
import os
import re
import sys

from astropy import log

from . import output, pipeline
from .audio_stft import read_wav
from .config import load_config, parameterLimits
from .exceptions import ConfigurationError, MicArrayError
from .simulator import read_scene, standard_fixtures

__all__ = ['build_parser', 'main']


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        low, high = parameterLimits()['run.seed']
        if not low <= args.seed <= high:
            raise ConfigurationError('seed {} outside [{}, {}]'.format(
                args.seed, low, high))
        cfg.run.seed = args.seed
    return cfg


def cmd_simulate(args, cfg):
    if args.scene:
        spec = read_scene(args.scene, cfg.mic_positions)
    else:
        fixtures = standard_fixtures(cfg.seed, cfg.mic_positions,
                                     args.duration)
        if args.fixture not in fixtures:
            raise ConfigurationError('unknown fixture {!r}; available: {}'
                                     .format(args.fixture,
                                             ', '.join(sorted(fixtures))))
        spec = fixtures[args.fixture]
    pipeline.run_simulation(spec, cfg.seed, args.out)


def cmd_localize(args, cfg):
    mixture = read_wav(args.mixture)
    detections, estimates = pipeline.run_localization(mixture, cfg)
    run = output.RunArtifacts(args.out).makedirs()
    output.write_detections(run.path(run.DETECTIONS), detections)
    output.write_tracks(run.path(run.TRACKS), estimates)
    confirmed = {e.track_id for step in estimates for e in step if e.confirmed}
    log.info('{} confirmed tracks'.format(len(confirmed)))
    if args.plot:
        import matplotlib
        matplotlib.use('Agg')
        from . import plots
        truth = output.read_truth(args.truth) if args.truth else None
        plots.plot_localization(output.detections_to_dataframe(detections),
                                output.tracks_to_dataframe(estimates), truth,
                                run.path('localize.png'))


def cmd_separate(args, cfg):
    mixture = read_wav(args.mixture)
    if args.tracks is None and not args.live:
        raise ConfigurationError('give --tracks FILE or --live')
    tracks = output.read_tracks(args.tracks) if args.tracks else None
    stems = output.RunArtifacts(args.stems).stems() if args.stems else None
    reverb = None if args.reverb is None else args.reverb == 'on'
    result = pipeline.run_separation(
        mixture, cfg, tracks, args.live, not args.no_postfilter,
        args.single_source_pf, args.delay_and_sum, reverb, stems)
    pipeline.write_separation(result, cfg, args.out)


def cmd_featurize(args, cfg):
    source_id = args.source_id
    if source_id is None:
        match = re.search(r'_(\d+)\.wav$', os.path.basename(args.separated))
        if match is None:
            raise ConfigurationError('cannot infer the source id of {}; use '
                                     '--source-id'.format(args.separated))
        source_id = int(match.group(1))
    diagnostics, attrs = output.read_diagnostics(args.diagnostics)
    if source_id not in diagnostics:
        raise MicArrayError('no diagnostics for source {} in {}'.format(
            source_id, args.diagnostics))
    separated = read_wav(args.separated)
    features, mask = pipeline.run_featurize(separated.samples[0],
                                            diagnostics[source_id], attrs, cfg)
    run = output.RunArtifacts(args.out or os.path.dirname(args.separated)
                              or '.').makedirs()
    output.write_matrix(run.path('features', source_id), features.matrix(),
                        'static log-Mel features and deltas, one frame per line')
    output.write_matrix(run.path('mask', source_id), mask.matrix(),
                        'feature reliability, one frame per line', integer=True)


def cmd_eval(args, cfg):
    scene = output.RunArtifacts(args.scene)
    run = output.RunArtifacts(args.separated)
    mixture = scene.mixture()
    report = pipeline.run_evaluation(run.separated(), mixture.samples,
                                     scene.stems(), scene.sources(),
                                     scene.truth(), cfg, run.references(),
                                     args.reference)
    print(report)
    report.write(args.out or os.path.join(args.separated, 'eval.csv'))


def build_parser():
    parser = argparse.ArgumentParser(
        prog='micarray', description='Microphone array localisation, '
        'tracking, separation and missing-feature masks.')
    parser.add_argument('--config', help='run configuration file')
    parser.add_argument('--seed', type=int, help='override run.seed')
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='debug output')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help='synthesise a test scene')
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument('--fixture', help='name of a standard scene')
    group.add_argument('--scene', help='scene description file')
    p.add_argument('--duration', type=float, help='fixture length [s]')
    p.add_argument('--out', required=True, help='output directory')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('localize', help='localise and track sources')
    p.add_argument('mixture', help='multichannel WAV file')
    p.add_argument('--out', required=True, help='output directory')
    p.add_argument('--plot', action='store_true', help='save localize.png')
    p.add_argument('--truth', help='ground truth CSV drawn in the plot')
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser('separate', help='separate tracked sources')
    p.add_argument('mixture', help='multichannel WAV file')
    p.add_argument('--out', required=True, help='output directory')
    p.add_argument('--tracks', help='tracks CSV from localize')
    p.add_argument('--live', action='store_true',
                   help='localise and track while separating')
    p.add_argument('--no-postfilter', action='store_true',
                   help='output the separation without post-filter')
    p.add_argument('--single-source-pf', action='store_true',
                   help='post-filter without the leakage term')
    p.add_argument('--delay-and-sum', action='store_true',
                   help='freeze the delay-and-sum initialisation')
    p.add_argument('--reverb', choices=('on', 'off'),
                   help='reverberation term of the post-filter')
    p.add_argument('--stems', help='scene directory whose stems give '
                   'reference signals')
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser('featurize', help='features and missing-feature masks')
    p.add_argument('separated', help='separated WAV file')
    p.add_argument('--diagnostics', required=True,
                   help='post-filter diagnostics file')
    p.add_argument('--source-id', type=int, help='track id of the source')
    p.add_argument('--out', help='output directory')
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser('eval', help='evaluate separated signals')
    p.add_argument('--separated', required=True, help='separation directory')
    p.add_argument('--scene', required=True, help='scene directory')
    p.add_argument('--reference', choices=('gss', 'stem'),
                   help='reference signals')
    p.add_argument('--out', help='report CSV')
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    """ Run the command line; returns the exit code."""
    args = build_parser().parse_args(argv)
    log.setLevel('DEBUG' if args.verbose else 'INFO')
    try:
        cfg = _load(args)
        args.func(args, cfg)
    except MicArrayError as e:
        print('error: {}: {}'.format(type(e).__name__, e), file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
