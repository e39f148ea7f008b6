"""Build a uniform baseline track and apply local edits to it.

Edits only touch the tokens they name.  Millisecond targets are turned
into frames with half-up rounding, so 260 ms becomes 24 frames at
93.75 fps.

Run: python demos/02_local_edits.py
"""

from tokentiming.editing import EditSpec, apply_edit, text_to_ids, uniform_baseline

ids, punct = text_to_ids("跟我读，苹果。")
base = uniform_baseline(ids, punct)
print("ids       ", ids)
print("baseline  ", base.content.tolist(), base.pause.tolist())

slow = apply_edit(base, EditSpec("content_scale", 4, 6, 1.5))
print("slower    ", slow.content.tolist(), slow.pause.tolist())

paused = apply_edit(base, EditSpec("pause_set", 3, 4, 260.0))
print("pause     ", paused.content.tolist(), paused.pause.tolist())
