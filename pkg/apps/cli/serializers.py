from django.conf import settings
from rest_framework import serializers

from apps.base.exceptions import ConfigurationError, ContractViolation, InsufficientSamples
from apps.belief.svgd import SCHEDULES
from apps.mppi.sampling import NoiseConfig
from apps.safety.conformal import conformal_rank, default_samples
from apps.simlab.environments import make_environment
from apps.simlab.services import BenchmarkSpec
from apps.simlab.variants import VARIANTS, belief_options, controller_options


class RunConfigSerializer(serializers.Serializer):
    """Validates a merged run configuration before any trial starts.

    ``run`` and ``validate`` both go through this serializer, so they accept
    exactly the same configurations.
    """

    environment = serializers.CharField()
    controller = serializers.ChoiceField(choices=sorted(VARIANTS), default='prmppi')
    delta = serializers.FloatField(required=False)
    samples = serializers.IntegerField(required=False, allow_null=True, min_value=1)
    particles = serializers.IntegerField(required=False, min_value=2)
    rollouts = serializers.IntegerField(min_value=1)
    horizon = serializers.IntegerField(required=False, min_value=2)
    seed = serializers.IntegerField(default=0, min_value=0)
    trials = serializers.IntegerField(min_value=1)
    output = serializers.CharField(required=False, allow_blank=False)
    preset = serializers.ChoiceField(choices=sorted(settings.PRMPPI_PRESETS), default='desk')
    workers = serializers.IntegerField(required=False, allow_null=True, min_value=1)
    log_steps = serializers.BooleanField(default=False)
    environment_overrides = serializers.DictField(required=False, default=dict)
    controller_overrides = serializers.DictField(required=False, default=dict)
    belief_overrides = serializers.DictField(required=False, default=dict)

    def validate_delta(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError('delta must lie strictly between 0 and 1.')
        return value

    def validate(self, attrs):
        """Resolve defaults and check that every component can be built."""
        controller = attrs['controller_overrides']
        if attrs.get('delta') is None:
            try:
                attrs['delta'] = self.validate_delta(
                    float(controller.get('delta', settings.PRMPPI_CONTROLLER_DEFAULTS['delta'])))
            except (TypeError, ValueError, serializers.ValidationError):
                raise serializers.ValidationError({'delta': 'delta must lie strictly between 0 and 1.'})
        if not attrs.get('samples'):
            attrs['samples'] = controller.get('samples') or default_samples(attrs['delta'])
        try:
            conformal_rank(attrs['samples'], attrs['delta'])
        except InsufficientSamples as exc:
            raise serializers.ValidationError({'samples': str(exc)})

        try:
            environment = make_environment(attrs['environment'], attrs['environment_overrides'])
        except ConfigurationError as exc:
            raise serializers.ValidationError({'environment': str(exc)})

        try:
            options = controller_options(environment, self.controller_overrides(attrs))
            NoiseConfig.from_std(options['control_std'], options['beta'])
            if len(options['control_std']) != environment.model.descriptor.n_u:
                raise ContractViolation(f'control_std needs {environment.model.descriptor.n_u} entries.')
            for key in ('penalty', 'robust_beta'):
                if not options[key] > 0:
                    raise ContractViolation(f'{key} must be positive.')
            if options['horizon'] < 2:
                raise ContractViolation('horizon must be at least 2.')
        except (ContractViolation, KeyError, TypeError) as exc:
            raise serializers.ValidationError({'controller_overrides': str(exc)})

        unknown = set(attrs['belief_overrides']) - set(settings.PRMPPI_BELIEF_DEFAULTS)
        if unknown:
            raise serializers.ValidationError({'belief_overrides': f'Unknown belief settings {sorted(unknown)}.'})
        belief = self.belief_overrides(attrs)
        if not isinstance(belief['particles'], int) or belief['particles'] < 2:
            raise serializers.ValidationError({'particles': 'A particle belief needs at least 2 particles.'})
        if belief['svgd_schedule'] not in SCHEDULES:
            raise serializers.ValidationError({'belief_overrides': f'svgd_schedule must be one of {SCHEDULES}.'})
        return attrs

    @staticmethod
    def controller_overrides(attrs):
        overrides = dict(attrs.get('controller_overrides', {}))
        for key in ('delta', 'samples', 'rollouts', 'horizon'):
            if attrs.get(key) is not None:
                overrides[key] = attrs[key]
        return overrides

    @staticmethod
    def belief_overrides(attrs):
        overrides = dict(attrs.get('belief_overrides', {}))
        if attrs.get('particles') is not None:
            overrides['particles'] = attrs['particles']
        return belief_options(overrides)

    def to_spec(self):
        """The BenchmarkSpec of the validated configuration."""
        attrs = self.validated_data
        return BenchmarkSpec(
            environment=attrs['environment'],
            variant=attrs['controller'],
            trials=attrs['trials'],
            base_seed=attrs['seed'],
            environment_overrides=attrs['environment_overrides'],
            controller_overrides=self.controller_overrides(attrs),
            belief_overrides=self.belief_overrides(attrs),
            log_steps=attrs['log_steps'],
        )

    def output_dir(self):
        attrs = self.validated_data
        if attrs.get('output'):
            return attrs['output']
        return settings.PRMPPI_RESULTS_DIR / attrs['environment'] / attrs['controller'] / f'seed{attrs["seed"]}'
