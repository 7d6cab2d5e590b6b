import json

from rest_framework.renderers import JSONRenderer

RESULT_FORMAT_VERSION = 1


class ResultEnvelope(object):
    """
    結果檔的外層封裝
    """

    def __init__(self, kind, data):
        self.kind = kind
        self.version = RESULT_FORMAT_VERSION
        self.data = data

    @property
    def dict(self):
        return self.__dict__


class ResultJSONRenderer(JSONRenderer):
    """
    自行封裝的渲染器，結果檔一律包成：
        {"kind": "X", "version": 1, "data": {...}}
    縮排固定為 2，欄位順序跟著序列化器，
    同樣的輸入永遠得到同樣的位元組。
    """
    ensure_ascii = True

    def render_result(self, kind, data):
        body = ResultEnvelope(kind, data)
        return super().render(body.dict, renderer_context={'indent': 2}) + b'\n'


def write_result(path, kind, data):
    """把 data 以 envelope 寫到 path，回傳寫入的位元組數"""
    payload = ResultJSONRenderer().render_result(kind, data)
    with open(path, 'wb') as f:
        f.write(payload)
    return len(payload)


def read_result(path, kind=None):
    """讀回 write_result 寫出的檔案，kind 不符時丟 ValueError"""
    with open(path, 'rb') as f:
        body = json.loads(f.read().decode('utf-8'))
    if kind is not None and body.get('kind') != kind:
        raise ValueError(f"{path} 的 kind 為 {body.get('kind')!r}，預期 {kind!r}")
    return body['data']
