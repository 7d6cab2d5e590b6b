"""
設定檔各區段的驗證，以及 grid 相關結果檔的格式
"""
from rest_framework import serializers
from rest_framework.settings import api_settings

from apps.datasets.services import DELIMITERS, NORMALIZE_SCOPES
from apps.dreamer.entities import MODES, SCORE_TARGETS, SEED_POOLS, SEED_STRATEGIES, SMOOTHING, VARIANTS


class SectionSerializer(serializers.Serializer):
    """區段必須是對應表，且不接受未宣告的鍵"""

    def to_internal_value(self, data):
        if not isinstance(data, dict):
            raise serializers.ValidationError({api_settings.NON_FIELD_ERRORS_KEY: ['必須是鍵值對應表']})
        unknown = sorted(str(key) for key in set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: ['未知的設定鍵'] for key in unknown})
        return super().to_internal_value(data)


class SynthSectionSerializer(SectionSerializer):
    n_train = serializers.IntegerField(min_value=2, required=False)
    n_test = serializers.IntegerField(min_value=2, required=False)
    length = serializers.IntegerField(min_value=1, required=False)


class DataSectionSerializer(SectionSerializer):
    train_path = serializers.CharField(required=False)
    test_path = serializers.CharField(required=False)
    delimiter = serializers.ChoiceField(choices=sorted(DELIMITERS), required=False)
    normalize = serializers.ChoiceField(choices=('none',) + tuple(NORMALIZE_SCOPES), required=False)
    synth = SynthSectionSerializer(required=False)


class ModelSectionSerializer(SectionSerializer):
    blocks = serializers.IntegerField(min_value=1, required=False)
    convs_per_block = serializers.IntegerField(min_value=1, required=False)
    channels = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False, required=False)
    kernels = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False, required=False)


class TrainSectionSerializer(SectionSerializer):
    epochs = serializers.IntegerField(min_value=0, required=False)
    lr = serializers.FloatField(required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False)
    beta1 = serializers.FloatField(required=False, source='beta_1')
    beta2 = serializers.FloatField(required=False, source='beta_2')
    eps = serializers.FloatField(required=False, source='epsilon')


class ClassFieldMixin(object):
    """'class' 是保留字，只能在 get_fields 裡加進去"""

    def get_fields(self):
        fields = super().get_fields()
        fields['class'] = serializers.IntegerField(min_value=0, required=False, source='target_class')
        return fields


class DreamSectionSerializer(ClassFieldMixin, SectionSerializer):
    variant = serializers.ChoiceField(choices=VARIANTS, required=False)
    mode = serializers.ChoiceField(choices=MODES, required=False)
    steps = serializers.IntegerField(required=False)
    lr = serializers.FloatField(required=False)
    alpha = serializers.FloatField(required=False)
    beta = serializers.FloatField(required=False)
    sigma = serializers.FloatField(required=False)
    lambda_alpha = serializers.FloatField(required=False)
    lambda_beta = serializers.FloatField(required=False)
    lambda_sm = serializers.FloatField(required=False)
    target_multiplier = serializers.FloatField(required=False)
    blur_every = serializers.IntegerField(required=False)
    l2_decay = serializers.FloatField(required=False)
    scale_jitter = serializers.FloatField(required=False)
    scale_per_point = serializers.BooleanField(required=False)
    smoothing = serializers.ChoiceField(choices=SMOOTHING, required=False)
    zero_phase = serializers.BooleanField(required=False)
    ma_window = serializers.IntegerField(required=False)
    exp_gamma = serializers.FloatField(required=False)
    plateau_eps = serializers.FloatField(required=False)
    plateau_window = serializers.IntegerField(required=False)
    reinit_noise_scale = serializers.FloatField(required=False)
    overshoot_noise_scale = serializers.FloatField(required=False)
    clamp_lo = serializers.FloatField(required=False)
    clamp_hi = serializers.FloatField(required=False)
    seed_strategy = serializers.ChoiceField(choices=SEED_STRATEGIES, required=False)
    seed_pool = serializers.ChoiceField(choices=SEED_POOLS, required=False)
    score_target = serializers.ChoiceField(choices=SCORE_TARGETS, required=False)
    weight_decay = serializers.FloatField(required=False)


class GridSectionSerializer(ClassFieldMixin, SectionSerializer):
    steps = serializers.ListField(child=serializers.IntegerField(), allow_empty=True, required=False)
    lr = serializers.ListField(child=serializers.FloatField(), allow_empty=True, required=False)
    alpha = serializers.ListField(child=serializers.FloatField(), allow_empty=True, required=False)
    beta = serializers.ListField(child=serializers.FloatField(), allow_empty=True, required=False)
    sigma = serializers.ListField(child=serializers.FloatField(), allow_empty=True, required=False)
    lambda_alpha = serializers.ListField(child=serializers.FloatField(), allow_empty=True, required=False)
    lambda_beta = serializers.ListField(child=serializers.FloatField(), allow_empty=True, required=False)
    lambda_sm = serializers.ListField(child=serializers.FloatField(), allow_empty=True, required=False)
    mode = serializers.ChoiceField(choices=MODES, required=False)
    variant = serializers.ChoiceField(choices=VARIANTS, required=False)
    seeds = serializers.ListField(child=serializers.IntegerField(), allow_empty=True, required=False)
    parallelism = serializers.IntegerField(min_value=1, required=False)


class EvalSectionSerializer(SectionSerializer):
    layer = serializers.CharField(required=False)
    eps_scale = serializers.FloatField(required=False)
    per_class = serializers.BooleanField(required=False)


class GridRecordSerializer(serializers.Serializer):
    """manifest.jsonl 的一列；finished_at 只出現在 manifest，不進結果檔"""
    run_id = serializers.CharField()
    status = serializers.ChoiceField(choices=('ok', 'failed'))
    mode = serializers.CharField()
    target_class = serializers.IntegerField()
    final_loss = serializers.FloatField(allow_null=True)
    prediction = serializers.IntegerField(allow_null=True)
    confidence = serializers.FloatField(allow_null=True)
    activation_distance = serializers.FloatField(allow_null=True)
    activation_band_max = serializers.FloatField(allow_null=True)
    error = serializers.CharField(allow_blank=True)
    finished_at = serializers.DateTimeField(required=False)


class GridRankingSerializer(serializers.Serializer):
    """grid/ranking.json"""
    total = serializers.IntegerField()
    failed = serializers.IntegerField()
    feasible = serializers.IntegerField()
    min_confidence = serializers.FloatField()
    best = serializers.CharField(allow_null=True)
    ranking = GridRecordSerializer(many=True)
