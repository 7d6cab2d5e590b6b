from rest_framework import serializers


class EpochRecordSerializer(serializers.Serializer):
    epoch = serializers.IntegerField()
    loss = serializers.FloatField()
    accuracy = serializers.FloatField()


class TrainingHistorySerializer(serializers.Serializer):
    """weights/history.json 的內容"""
    epochs = EpochRecordSerializer(many=True)
    train_accuracy = serializers.FloatField(allow_null=True)
    test_accuracy = serializers.FloatField(allow_null=True)
    config = serializers.DictField(required=False)
