#include "t3vf/env.hpp"

namespace t3vf {

// Generated by tools/gen_mixing_matrix.py (numpy default_rng(0), Sinkhorn
// balanced); mirrors assets/instruction_mixing_8.txt.
const Mat& instruction_mixing_matrix() {
  static const Mat mix = [] {
    Mat m(8, 8);
    m <<
        0.38383231203581736, 0.04448579439365942, 0.014899560523068926, 0.019406340784192944, 0.13229200860823281, 0.17660581034711173, 0.10231846867219777, 0.12615970463571879,
        0.10943915056017556, 0.38416086914689129, 0.14996188430869281, 0.016854400608681586, 0.15082315780763836, 0.017109673495501534, 0.13170527047795294, 0.0399455935944657,
        0.16352568861342132, 0.086505030413756012, 0.32441954605083911, 0.14075505221041068, 0.01305190538988173, 0.034154912064539217, 0.11845950140225875, 0.11912836385489327,
        0.075299758974579967, 0.040105809249605225, 0.11132917213802165, 0.48836772547211138, 0.075133695410991436, 0.085689226786296077, 0.076624537519103086, 0.047450074449291675,
        0.03032057153127889, 0.1019584173469375, 0.087822206680138348, 0.097199038180888542, 0.3088047475600052, 0.16452147360623465, 0.14617725202877152, 0.063196293065745479,
        0.10043525351096652, 0.049141557890402643, 0.097932446097763179, 0.10422131281149992, 0.064548664174067072, 0.43875046292609832, 0.041296919923288981, 0.1036733826659135,
        0.026844308101514718, 0.14182004639211676, 0.15519257326435251, 0.095133913681488297, 0.16481327878820409, 0.023619143258735806, 0.3545747909349698, 0.03800194557861817,
        0.11030295667224561, 0.15182247516663122, 0.058442610937123496, 0.038062216250726602, 0.090532542260979468, 0.05954929751548263, 0.028843259041457143, 0.46244464215535352;
    return m;
  }();
  return mix;
}

}  // namespace t3vf
