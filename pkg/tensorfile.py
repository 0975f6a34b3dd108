# encoding: utf-8
"""
PCT1 tensor container.

	header    b'PCT1', u32 entry count
	entry     u32 name length, UTF-8 name, u8 dtype code, u8 rank,
			  rank x u32 dims, u64 absolute payload offset
	payload   row-major data, each block starting on an 8-byte boundary

Every integer and every payload element is little-endian.
"""

import struct

import numpy as np


MAGIC = b'PCT1'
ALIGNMENT = 8

DTYPES = {0: np.dtype('<f4'), 1: np.dtype('<f8'), 2: np.dtype('u1')}
DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.uint8): 2}



class FormatError(ValueError):

	def __init__(self, message, offset):

		ValueError.__init__(self, "%s (at byte %s)" % (message, offset))
		self.offset = offset



def _align(n):

	return (n + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT



def pack_tensors(tensors):

	"""
	Serializes named arrays in name order.

	Parameters
	----------

	tensors: dict
		Name -> array of dtype float32, float64 or uint8.

	Returns
	-------

	data: bytes
	"""

	names = sorted(tensors)
	arrays = []
	table = bytearray()

	for name in names:

		array = np.asarray(tensors[name])
		if array.dtype not in DTYPE_CODES:
			raise ValueError("Tensor '%s' has unsupported dtype %s" % (name, array.dtype))
		if array.ndim > 255:
			raise ValueError("Tensor '%s' has rank %d > 255" % (name, array.ndim))

		encoded = name.encode('utf-8')
		table += struct.pack('<I', len(encoded)) + encoded
		table += struct.pack('<BB', DTYPE_CODES[array.dtype], array.ndim)
		table += struct.pack('<%dI' % array.ndim, *array.shape)
		# offset placeholder, patched below
		table += struct.pack('<Q', 0)

		arrays.append(array)

	header = MAGIC + struct.pack('<I', len(names))
	position = _align(len(header) + len(table))

	offsets = []
	for array in arrays:
		offsets.append(position)
		position = _align(position + array.nbytes)

	# patch offsets in table order
	cursor = 0
	for array, offset in zip(arrays, offsets):
		name_len = struct.unpack_from('<I', table, cursor)[0]
		cursor += 4 + name_len + 2 + 4 * array.ndim
		struct.pack_into('<Q', table, cursor, offset)
		cursor += 8

	data = bytearray(header + table)
	for array, offset in zip(arrays, offsets):
		data += bytes(offset - len(data))
		data += np.ascontiguousarray(array, dtype=DTYPES[DTYPE_CODES[array.dtype]]).tobytes()

	return bytes(data)



def unpack_tensors(data):

	"""
	Parses a PCT1 byte string.

	Returns
	-------

	tensors: dict
		Name -> array, in table order.

	Raises
	------

	FormatError
		Bad magic, truncated table or payload, unknown dtype, duplicated
		names, or payloads that overlap the table or each other.
	"""

	data = bytes(data)
	if len(data) < 8 or data[:4] != MAGIC:
		raise FormatError("Bad magic, expected %r" % MAGIC, 0)

	count = struct.unpack_from('<I', data, 4)[0]
	cursor = 8
	entries = []

	def need(n):
		if cursor + n > len(data):
			raise FormatError("Truncated entry table", cursor)

	for _ in range(count):

		need(4)
		name_len = struct.unpack_from('<I', data, cursor)[0]
		cursor += 4

		need(name_len)
		try:
			name = data[cursor:cursor + name_len].decode('utf-8')
		except UnicodeDecodeError:
			raise FormatError("Entry name is not UTF-8", cursor)
		cursor += name_len

		need(2)
		code, rank = struct.unpack_from('<BB', data, cursor)
		if code not in DTYPES:
			raise FormatError("Unknown dtype code %d" % code, cursor)
		cursor += 2

		need(4 * rank + 8)
		dims = struct.unpack_from('<%dI' % rank, data, cursor)
		cursor += 4 * rank
		offset = struct.unpack_from('<Q', data, cursor)[0]
		entry_offset = cursor
		cursor += 8

		entries.append((name, DTYPES[code], dims, offset, entry_offset))

	table_end = cursor
	tensors = {}
	spans = []

	for name, dtype, dims, offset, entry_offset in entries:

		if name in tensors:
			raise FormatError("Duplicated tensor name '%s'" % name, entry_offset)

		size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
		if offset < table_end:
			raise FormatError("Payload of '%s' overlaps the entry table" % name, entry_offset)
		if offset + size > len(data):
			raise FormatError("Payload of '%s' runs past the end of the file" % name, offset)

		spans.append((offset, offset + size, name))
		if size == 0:
			tensors[name] = np.zeros(dims, dtype=dtype)
		else:
			tensors[name] = np.frombuffer(data, dtype=dtype, count=size // dtype.itemsize,
										offset=offset).reshape(dims).copy()

	# empty payloads occupy no bytes
	furthest_end, furthest_name = table_end, None
	for start, end, name in sorted(s for s in spans if s[1] > s[0]):
		if start < furthest_end and furthest_name is not None:
			raise FormatError("Payloads of '%s' and '%s' overlap" % (furthest_name, name), start)
		if end > furthest_end:
			furthest_end, furthest_name = end, name

	return tensors



def write_tensor_file(path, tensors):

	with open(path, 'wb') as f:
		f.write(pack_tensors(tensors))



def read_tensor_file(path):

	with open(path, 'rb') as f:
		return unpack_tensors(f.read())
