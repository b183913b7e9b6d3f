#pragma once

#include <string>
#include <vector>

#include "nightenh/tensor.hpp"

namespace nightenh {

// One manifest line: a named layer with a kind and an optional shape. Layers
// whose kind carries data ("tensor", "conv") own one little-endian 32-bit
// float flat binary file, <name>.bin, in the archive directory.
struct ArchiveEntry {
    std::string name;
    std::string kind;
    std::vector<int> shape;
    std::vector<float> data;

    bool has_data() const { return kind == "tensor" || kind == "conv"; }
};

struct WeightArchive {
    std::vector<ArchiveEntry> entries;

    const ArchiveEntry* find(const std::string& name) const;
    // Entry's payload as a tensor of the manifest shape; throws if missing.
    Tensor tensor(const std::string& name) const;
    void add_tensor(const std::string& name, const Tensor& t);
};

// Directory layout: <dir>/manifest.txt plus one <name>.bin per data entry.
WeightArchive load_archive(const std::string& dir);
void save_archive(const WeightArchive& archive, const std::string& dir);

} // namespace nightenh
