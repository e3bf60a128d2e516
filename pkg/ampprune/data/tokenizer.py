from __future__ import absolute_import

__all__ = ['ByteTokenizer', 'BOS_ID', 'VOCAB_SIZE']


BOS_ID = 256
VOCAB_SIZE = 257


class ByteTokenizer(object):
    """Byte-level tokenizer: token id = byte value, plus id 256 for BOS.

    Examples::
        >>> tok = ByteTokenizer()
        >>> tok.encode('abc')
        [97, 98, 99]
        >>> tok.decode([256, 104, 105])
        b'hi'
    """
    bos_id = BOS_ID
    vocab_size = VOCAB_SIZE

    def encode(self, text, bos=False):
        """Encodes ``str`` (as UTF-8) or ``bytes`` into token ids."""
        if isinstance(text, str):
            text = text.encode('utf-8')
        ids = list(bytearray(text))
        if bos:
            ids.insert(0, BOS_ID)
        return ids

    def decode(self, ids):
        """Returns the bytes of ``ids``; BOS maps to nothing."""
        out = bytearray()
        for i in ids:
            i = int(i)
            if i == BOS_ID:
                continue
            if not 0 <= i < 256:
                raise ValueError('token id {} out of range for vocab_size {}'.format(i, VOCAB_SIZE))
            out.append(i)
        return bytes(out)

    def decode_text(self, ids):
        return self.decode(ids).decode('utf-8', errors='replace')
