#include "pspc/evalset.hpp"

#include "pspc/csv.hpp"
#include "pspc/diffusion.hpp"
#include "pspc/errors.hpp"
#include "pspc/manifest.hpp"

namespace pspc {

namespace fs = std::filesystem;

void EvalSet::validate() const {
    if (t_grid.empty() || batch == 0) {
        throw ConfigError("evaluation set needs a nonempty t grid and batch >= 1");
    }
    for (double t : t_grid) detail::require_positive_time(t, "evaluation set");
    if (z.size() != t_grid.size() * batch * dim()) {
        throw ShapeMismatch("evaluation set payload does not match (T, M, H, W, C)");
    }
    if (!source_index.empty() && source_index.size() != t_grid.size() * batch) {
        throw ShapeMismatch("evaluation set source indices do not match (T, M)");
    }
}

EvalSet build_forward_evalset(const ImageDataset& dataset, std::span<const double> t_grid, std::size_t batch,
                              std::uint64_t seed, std::string schedule_id) {
    if (batch < 1) throw ConfigError("evaluation batch size must be >= 1");
    if (t_grid.empty()) throw ConfigError("evaluation t grid is empty");
    EvalSet set;
    set.shape = dataset.shape();
    set.t_grid.assign(t_grid.begin(), t_grid.end());
    set.batch = batch;
    set.source = "forward";
    set.schedule_id = std::move(schedule_id);
    set.seed = seed;
    set.z.reserve(t_grid.size() * batch * dataset.dim());
    for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
        auto fwd = sample_forward(dataset, t_grid[ti], batch, seed, ti);
        set.z.insert(set.z.end(), fwd.z.begin(), fwd.z.end());
        set.source_index.insert(set.source_index.end(), fwd.source.begin(), fwd.source.end());
    }
    return set;
}

void save_evalset(const fs::path& dir, const EvalSet& set, DType dtype) {
    set.validate();
    fs::create_directories(dir);
    Tensor z;
    z.dims = {set.t_grid.size(), set.batch, set.shape.height, set.shape.width, set.shape.channels};
    z.values = set.z;
    z.dtype = dtype;
    write_tensor_file(dir / "z.tensor", z);
    if (!set.source_index.empty()) {
        Tensor src;
        src.dims = {set.t_grid.size(), set.batch};
        src.values.assign(set.source_index.begin(), set.source_index.end());
        write_tensor_file(dir / "sources.tensor", src);
    }
    Table grid;
    std::vector<double> index(set.t_grid.size());
    for (std::size_t i = 0; i < index.size(); ++i) index[i] = static_cast<double>(i);
    grid.add("index", index).add("t", set.t_grid);
    emit_csv(grid, dir / "t_grid.csv");
    RunManifest m;
    m.set("source", set.source);
    m.set("schedule_id", set.schedule_id);
    m.set("seed", set.seed);
    m.set("batch", static_cast<std::uint64_t>(set.batch));
    m.save(dir / "evalset.manifest");
}

EvalSet load_evalset(const fs::path& dir) {
    const Tensor z = read_tensor_file(dir / "z.tensor");
    if (z.dims.size() != 5) throw ShapeMismatch("evaluation set tensor must be (T, M, H, W, C)");
    const Table grid = read_csv(dir / "t_grid.csv");
    const RunManifest m = RunManifest::load(dir / "evalset.manifest");
    EvalSet set;
    set.shape = {z.dims[2], z.dims[3], z.dims[4]};
    set.t_grid = grid.column("t");
    set.batch = z.dims[1];
    set.z = z.values;
    set.source = m.get("source");
    set.schedule_id = m.get("schedule_id");
    set.seed = m.get_uint("seed");
    if (set.t_grid.size() != z.dims[0]) throw ShapeMismatch("t grid length does not match the evaluation tensor");
    if (fs::exists(dir / "sources.tensor")) {
        const Tensor src = read_tensor_file(dir / "sources.tensor");
        set.source_index.assign(src.values.begin(), src.values.end());
    }
    set.validate();
    return set;
}

}  // namespace pspc
