import numpy as np
from rest_framework import serializers

from .entities import DreamResult


class DreamResultSerializer(serializers.Serializer):
    """
    dreams/<run_id>.json 的 data 欄位。欄位順序即輸出順序。
    """
    run_id = serializers.CharField(allow_blank=True)
    variant = serializers.CharField()
    mode = serializers.CharField()
    target_class = serializers.IntegerField()
    seed_provenance = serializers.CharField(allow_blank=True)
    config = serializers.DictField()
    target = serializers.ListField(child=serializers.FloatField(), allow_null=True)
    steps_used = serializers.IntegerField(read_only=True)
    reinit_count = serializers.IntegerField()
    best_step = serializers.IntegerField()
    final_loss = serializers.FloatField()
    prediction = serializers.IntegerField()
    confidence = serializers.FloatField()
    series = serializers.ListField(child=serializers.FloatField())
    loss_trace = serializers.ListField(child=serializers.FloatField())
    score_trace = serializers.ListField(child=serializers.FloatField())

    def validate(self, attrs):
        if len(attrs['loss_trace']) != len(attrs['score_trace']):
            raise serializers.ValidationError('loss_trace 與 score_trace 長度不同')
        return attrs

    def create(self, validated_data):
        data = dict(validated_data)
        data['series'] = np.array(data['series'], dtype=np.float64)
        return DreamResult(**data)


def dream_result_from_data(data):
    """把讀回的 JSON data 轉回 DreamResult，格式不符時丟 ValidationError"""
    serializer = DreamResultSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    return serializer.save()
