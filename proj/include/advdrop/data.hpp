#pragma once

#include <string>
#include <vector>

#include "advdrop/rng.hpp"
#include "advdrop/rnn.hpp"

namespace advdrop {

struct ImageSet {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> pixels;  // count * rows * cols
  std::vector<uint8_t> labels;  // count
};

// IDX containers, big-endian, magic 0x00000803 (images) / 0x00000801 (labels).
ImageSet load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const ImageSet& set, const std::string& images_path,
              const std::string& labels_path);

// One sample of a sequence task; inputs are T*D row-major in [0, 1].
struct SequenceSample {
  std::vector<double> inputs;
  int final_label = -1;
  std::vector<int> step_labels;
};

struct SequenceTask {
  TaskKind task = TaskKind::final_step_classification;
  int steps = 0;
  int input_dim = 0;
  int num_classes = 0;
  std::vector<SequenceSample> samples;

  int count() const { return static_cast<int>(samples.size()); }
};

enum class PixelOrder { scanline, permuted };

// Pixel-at-a-time sequence task (D_in = 1, values / 255). `downsample_side`
// pools the image to side x side first (0 keeps the native size); the pixel
// permutation for `permuted` order is fixed by `permutation_seed`.
SequenceTask image_sequence_task(const ImageSet& set, PixelOrder order,
                                 int downsample_side, uint64_t permutation_seed);

// Exposed for tests: the fixed pixel permutation used by `permuted` order.
std::vector<int> pixel_permutation(int length, uint64_t seed);

// Final label is the XOR of the binary stream.
SequenceTask parity_task(int count, int length, Rng& rng);
// Final label is the symbol seen `delay` steps before the end.
SequenceTask copy_task(int count, int length, int delay, int symbols, Rng& rng);
// Byte-level language modeling over any plain text: vocabulary = bytes
// present, per-step target = next byte.
SequenceTask char_lm_task(const std::string& text, int context_len);

SequenceBatch make_batch(const SequenceTask& task, const std::vector<int>& indices);
// Splits into batches of `batch_size` (last one may be short). Shuffles
// sample order first when an rng is given.
std::vector<SequenceBatch> make_batches(const SequenceTask& task, int batch_size,
                                        Rng* shuffle_rng);

SequenceTask slice_task(const SequenceTask& task, int start, int count);

}  // namespace advdrop
