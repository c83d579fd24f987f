#include "advdrop/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

namespace advdrop {

static constexpr uint32_t kImageMagic = 0x00000803;
static constexpr uint32_t kLabelMagic = 0x00000801;

static uint32_t get_be_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail("load_idx: unexpected EOF in " + path);
  return static_cast<uint32_t>(b[0]) << 24 | static_cast<uint32_t>(b[1]) << 16 |
         static_cast<uint32_t>(b[2]) << 8 | static_cast<uint32_t>(b[3]);
}

static void put_be_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<char*>(b), 4);
}

ImageSet load_idx(const std::string& images_path, const std::string& labels_path) {
  ImageSet set;
  {
    std::ifstream is(images_path, std::ios::binary);
    if (!is) fail("load_idx: cannot open " + images_path);
    if (get_be_u32(is, images_path) != kImageMagic)
      fail("load_idx: bad magic in " + images_path);
    set.count = static_cast<int>(get_be_u32(is, images_path));
    set.rows = static_cast<int>(get_be_u32(is, images_path));
    set.cols = static_cast<int>(get_be_u32(is, images_path));
    const size_t n = static_cast<size_t>(set.count) * set.rows * set.cols;
    set.pixels.resize(n);
    is.read(reinterpret_cast<char*>(set.pixels.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
      fail("load_idx: unexpected EOF in " + images_path);
  }
  {
    std::ifstream is(labels_path, std::ios::binary);
    if (!is) fail("load_idx: cannot open " + labels_path);
    if (get_be_u32(is, labels_path) != kLabelMagic)
      fail("load_idx: bad magic in " + labels_path);
    const int count = static_cast<int>(get_be_u32(is, labels_path));
    if (count != set.count)
      fail("load_idx: image count " + std::to_string(set.count) +
           " does not match label count " + std::to_string(count));
    set.labels.resize(static_cast<size_t>(count));
    is.read(reinterpret_cast<char*>(set.labels.data()), count);
    if (static_cast<size_t>(is.gcount()) != set.labels.size())
      fail("load_idx: unexpected EOF in " + labels_path);
  }
  return set;
}

void save_idx(const ImageSet& set, const std::string& images_path,
              const std::string& labels_path) {
  {
    std::ofstream os(images_path, std::ios::binary);
    if (!os) fail("save_idx: cannot open " + images_path);
    put_be_u32(os, kImageMagic);
    put_be_u32(os, static_cast<uint32_t>(set.count));
    put_be_u32(os, static_cast<uint32_t>(set.rows));
    put_be_u32(os, static_cast<uint32_t>(set.cols));
    os.write(reinterpret_cast<const char*>(set.pixels.data()),
             static_cast<std::streamsize>(set.pixels.size()));
  }
  {
    std::ofstream os(labels_path, std::ios::binary);
    if (!os) fail("save_idx: cannot open " + labels_path);
    put_be_u32(os, kLabelMagic);
    put_be_u32(os, static_cast<uint32_t>(set.count));
    os.write(reinterpret_cast<const char*>(set.labels.data()),
             static_cast<std::streamsize>(set.labels.size()));
  }
}

std::vector<int> pixel_permutation(int length, uint64_t seed) {
  std::vector<int> perm(static_cast<size_t>(length));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (int i = length - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.uniform_int(i + 1))]);
  return perm;
}

// Box average: output bin (i, j) pools the input pixels whose coordinates
// map into it under floor(r * side / rows).
static std::vector<double> downsample(const uint8_t* img, int rows, int cols, int side) {
  std::vector<double> acc(static_cast<size_t>(side) * side, 0.0);
  std::vector<int> hits(static_cast<size_t>(side) * side, 0);
  for (int r = 0; r < rows; ++r) {
    const int br = r * side / rows;
    for (int c = 0; c < cols; ++c) {
      const int bc = c * side / cols;
      acc[static_cast<size_t>(br) * side + bc] += img[r * cols + c] / 255.0;
      hits[static_cast<size_t>(br) * side + bc] += 1;
    }
  }
  for (size_t i = 0; i < acc.size(); ++i) acc[i] /= hits[i];
  return acc;
}

SequenceTask image_sequence_task(const ImageSet& set, PixelOrder order,
                                 int downsample_side, uint64_t permutation_seed) {
  if (set.count < 1) fail("image_sequence_task: empty image set");
  const int side = downsample_side;
  const int length = side > 0 ? side * side : set.rows * set.cols;

  SequenceTask task;
  task.task = TaskKind::final_step_classification;
  task.steps = length;
  task.input_dim = 1;
  task.num_classes = 10;
  task.samples.reserve(static_cast<size_t>(set.count));

  std::vector<int> perm;
  if (order == PixelOrder::permuted) perm = pixel_permutation(length, permutation_seed);

  for (int i = 0; i < set.count; ++i) {
    const uint8_t* img = &set.pixels[static_cast<size_t>(i) * set.rows * set.cols];
    std::vector<double> stream;
    if (side > 0) {
      stream = downsample(img, set.rows, set.cols, side);
    } else {
      stream.resize(static_cast<size_t>(length));
      for (int j = 0; j < length; ++j) stream[static_cast<size_t>(j)] = img[j] / 255.0;
    }
    SequenceSample s;
    if (order == PixelOrder::permuted) {
      s.inputs.resize(stream.size());
      for (int j = 0; j < length; ++j)
        s.inputs[static_cast<size_t>(j)] = stream[static_cast<size_t>(perm[static_cast<size_t>(j)])];
    } else {
      s.inputs = std::move(stream);
    }
    s.final_label = set.labels[static_cast<size_t>(i)];
    task.samples.push_back(std::move(s));
  }
  return task;
}

SequenceTask parity_task(int count, int length, Rng& rng) {
  if (count < 1 || length < 1) fail("parity_task: count and length must be positive");
  SequenceTask task;
  task.task = TaskKind::final_step_classification;
  task.steps = length;
  task.input_dim = 1;
  task.num_classes = 2;
  for (int i = 0; i < count; ++i) {
    SequenceSample s;
    int x = 0;
    for (int t = 0; t < length; ++t) {
      const int bit = rng.bernoulli(0.5) ? 1 : 0;
      x ^= bit;
      s.inputs.push_back(bit);
    }
    s.final_label = x;
    task.samples.push_back(std::move(s));
  }
  return task;
}

SequenceTask copy_task(int count, int length, int delay, int symbols, Rng& rng) {
  if (count < 1 || length < 1) fail("copy_task: count and length must be positive");
  if (symbols < 2) fail("copy_task: needs at least 2 symbols");
  if (delay < 0 || delay >= length) fail("copy_task: delay must lie in [0, length)");
  SequenceTask task;
  task.task = TaskKind::final_step_classification;
  task.steps = length;
  task.input_dim = 1;
  task.num_classes = symbols;
  for (int i = 0; i < count; ++i) {
    SequenceSample s;
    std::vector<int> raw;
    for (int t = 0; t < length; ++t) {
      const int sym = rng.uniform_int(symbols);
      raw.push_back(sym);
      s.inputs.push_back(static_cast<double>(sym) / (symbols - 1));
    }
    s.final_label = raw[static_cast<size_t>(length - 1 - delay)];
    task.samples.push_back(std::move(s));
  }
  return task;
}

SequenceTask char_lm_task(const std::string& text, int context_len) {
  if (context_len < 1) fail("char_lm_task: context length must be positive");
  if (static_cast<int>(text.size()) < context_len + 1)
    fail("char_lm_task: corpus shorter than one context window");

  std::map<unsigned char, int> vocab;
  for (char ch : text) vocab.emplace(static_cast<unsigned char>(ch), 0);
  int next_id = 0;
  for (auto& kv : vocab) kv.second = next_id++;

  SequenceTask task;
  task.task = TaskKind::per_step_prediction;
  task.steps = context_len;
  task.input_dim = next_id;
  task.num_classes = next_id;
  const int windows = (static_cast<int>(text.size()) - 1) / context_len;
  for (int w = 0; w < windows; ++w) {
    SequenceSample s;
    s.inputs.assign(static_cast<size_t>(context_len) * next_id, 0.0);
    for (int t = 0; t < context_len; ++t) {
      const int pos = w * context_len + t;
      const int cur = vocab.at(static_cast<unsigned char>(text[static_cast<size_t>(pos)]));
      const int nxt = vocab.at(static_cast<unsigned char>(text[static_cast<size_t>(pos + 1)]));
      s.inputs[static_cast<size_t>(t) * next_id + cur] = 1.0;
      s.step_labels.push_back(nxt);
    }
    task.samples.push_back(std::move(s));
  }
  return task;
}

SequenceBatch make_batch(const SequenceTask& task, const std::vector<int>& indices) {
  if (indices.empty()) fail("make_batch: empty index set");
  const int rows = static_cast<int>(indices.size());
  SequenceBatch b;
  b.task = task.task;
  b.inputs.reserve(static_cast<size_t>(task.steps));
  for (int t = 0; t < task.steps; ++t) {
    Tensor x({rows, task.input_dim});
    for (int r = 0; r < rows; ++r) {
      const SequenceSample& s = task.samples[static_cast<size_t>(indices[static_cast<size_t>(r)])];
      for (int d = 0; d < task.input_dim; ++d)
        x.at(r, d) = s.inputs[static_cast<size_t>(t) * task.input_dim + d];
    }
    b.inputs.push_back(std::move(x));
  }
  if (task.task == TaskKind::final_step_classification) {
    for (int idx : indices)
      b.final_labels.push_back(task.samples[static_cast<size_t>(idx)].final_label);
  } else {
    b.step_labels.assign(static_cast<size_t>(task.steps), {});
    for (int t = 0; t < task.steps; ++t)
      for (int idx : indices)
        b.step_labels[static_cast<size_t>(t)].push_back(
            task.samples[static_cast<size_t>(idx)].step_labels[static_cast<size_t>(t)]);
  }
  return b;
}

std::vector<SequenceBatch> make_batches(const SequenceTask& task, int batch_size,
                                        Rng* shuffle_rng) {
  if (batch_size < 1) fail("make_batches: batch size must be positive");
  std::vector<int> idx(static_cast<size_t>(task.count()));
  std::iota(idx.begin(), idx.end(), 0);
  if (shuffle_rng)
    for (int i = task.count() - 1; i > 0; --i)
      std::swap(idx[static_cast<size_t>(i)],
                idx[static_cast<size_t>(shuffle_rng->uniform_int(i + 1))]);
  std::vector<SequenceBatch> out;
  for (int start = 0; start < task.count(); start += batch_size) {
    const int end = std::min(task.count(), start + batch_size);
    out.push_back(make_batch(task, std::vector<int>(idx.begin() + start, idx.begin() + end)));
  }
  return out;
}

SequenceTask slice_task(const SequenceTask& task, int start, int count) {
  if (start < 0 || count < 0 || start + count > task.count())
    fail("slice_task: range out of bounds");
  SequenceTask out = task;
  out.samples.assign(task.samples.begin() + start, task.samples.begin() + start + count);
  return out;
}

}  // namespace advdrop
