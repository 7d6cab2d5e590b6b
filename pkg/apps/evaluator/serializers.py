from rest_framework import serializers


class BandField(serializers.ListField):
    """(min, max) 以長度 2 的串列輸出"""
    child = serializers.FloatField()

    def to_representation(self, data):
        return [float(data[0]), float(data[1])]


class EvalReportSerializer(serializers.Serializer):
    """eval/<run_id>.json 的 data 欄位"""
    run_id = serializers.CharField(read_only=True)
    variant = serializers.CharField(read_only=True)
    mode = serializers.CharField(read_only=True)
    target_class = serializers.IntegerField(read_only=True)
    layer = serializers.CharField(read_only=True)
    per_class = serializers.BooleanField(read_only=True)
    prediction = serializers.IntegerField(read_only=True)
    confidence = serializers.FloatField(read_only=True)
    class_logit = serializers.FloatField(read_only=True)
    activation_distance = serializers.FloatField(read_only=True)
    activation_band = BandField(read_only=True)
    activation_eps = serializers.FloatField(read_only=True)
    activation_in_band = serializers.BooleanField(read_only=True)
    beyond_band = serializers.BooleanField(read_only=True)
    raw_distance = serializers.FloatField(read_only=True)
    raw_band = BandField(read_only=True)
    raw_eps = serializers.FloatField(read_only=True)
    raw_in_band = serializers.BooleanField(read_only=True)
    projection = serializers.ListField(child=serializers.FloatField(), read_only=True)
