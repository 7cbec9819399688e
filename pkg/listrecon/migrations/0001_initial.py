# Generated by Django 4.2.28 on 2026-10-18 09:12

from django.db import migrations, models


def _run_record_fields():
    return [
        ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
        ('status', models.CharField(choices=[('success', 'Success'), ('failed', 'Failed'), ('pending', 'Pending')], default='pending', help_text='Status of the run', max_length=20)),
        ('error_message', models.TextField(blank=True, help_text='Error message if the run failed')),
        ('config_path', models.CharField(blank=True, help_text='Run-config file the command was started with', max_length=500)),
        ('output_dir', models.CharField(blank=True, help_text='Directory the artifacts were written to', max_length=500)),
        ('seed', models.PositiveBigIntegerField(default=0, help_text='Random seed of the run')),
        ('threads', models.PositiveIntegerField(default=0, help_text='Projector worker threads (0 = numba default)')),
        ('created_at', models.DateTimeField(auto_now_add=True, help_text='Timestamp of the run')),
    ]


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=_run_record_fields() + [
                ('phantom', models.CharField(help_text='Phantom kind', max_length=30)),
                ('target_counts', models.PositiveBigIntegerField(help_text='Expected total counts')),
                ('n_events', models.PositiveBigIntegerField(default=0, help_text='Number of events actually drawn')),
                ('tof_ps', models.FloatField(help_text='TOF resolution (FWHM, ps)')),
                ('n_bins', models.PositiveIntegerField(help_text='Number of TOF bins')),
                ('realization', models.PositiveIntegerField(default=0, help_text='Noise realization index')),
                ('geometry_hash', models.CharField(blank=True, help_text='Hex hash of scanner, TOF and grid configuration', max_length=16)),
                ('event_file', models.CharField(blank=True, help_text='Path of the LMEV event file', max_length=500)),
            ],
            options={
                'verbose_name': 'Simulation Run',
                'verbose_name_plural': 'Simulation Runs',
                'ordering': ['-created_at'],
                'abstract': False,
            },
        ),
        migrations.CreateModel(
            name='ReconstructionRun',
            fields=_run_record_fields() + [
                ('algorithm', models.CharField(choices=[('mlem', 'LM-MLEM'), ('osem', 'LM-OSEM'), ('emtv', 'LM-EM-TV'), ('spdhg', 'LM-SPDHG'), ('spdhgtv', 'LM-SPDHG-TV'), ('lmpd', 'LMPDnet')], help_text='Reconstruction algorithm', max_length=20)),
                ('event_file', models.CharField(help_text='Path of the reconstructed LMEV event file', max_length=500)),
                ('simulation_dir', models.CharField(blank=True, help_text='Simulation output directory holding truth image and ROI masks', max_length=500)),
                ('target_counts', models.PositiveBigIntegerField(default=0, help_text='Count level of the simulation')),
                ('tof_ps', models.FloatField(default=0.0, help_text='TOF resolution (FWHM, ps)')),
                ('n_bins', models.PositiveIntegerField(default=0, help_text='Number of TOF bins')),
                ('n_events', models.PositiveBigIntegerField(default=0, help_text='Number of events reconstructed')),
                ('n_iterations', models.PositiveIntegerField(default=0, help_text='Iterations (or unrolled phases for LMPDnet)')),
                ('n_subsets', models.PositiveIntegerField(default=1, help_text='Number of subsets')),
                ('beta', models.FloatField(default=0.0, help_text='TV weight')),
                ('final_objective', models.FloatField(blank=True, help_text='Objective value after the last iteration', null=True)),
                ('psnr', models.FloatField(blank=True, help_text='PSNR against the truth image (dB)', null=True)),
                ('ssim', models.FloatField(blank=True, help_text='Global SSIM against the truth image', null=True)),
                ('image_file', models.CharField(blank=True, help_text='Path of the reconstructed IMG2 file', max_length=500)),
            ],
            options={
                'verbose_name': 'Reconstruction Run',
                'verbose_name_plural': 'Reconstruction Runs',
                'ordering': ['-created_at'],
                'abstract': False,
                'indexes': [models.Index(fields=['algorithm', 'target_counts'], name='listrecon_r_algorit_5c1d2e_idx'), models.Index(fields=['status'], name='listrecon_r_status_8a3f0b_idx')],
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=_run_record_fields() + [
                ('dataset_dir', models.CharField(help_text='Directory of (event file, truth image) pairs', max_length=500)),
                ('n_pairs', models.PositiveIntegerField(default=0, help_text='Number of training plus validation pairs')),
                ('epochs', models.PositiveIntegerField(default=0, help_text='Number of training epochs')),
                ('n_phases', models.PositiveIntegerField(default=0, help_text='Number of unrolled phases')),
                ('best_epoch', models.PositiveIntegerField(blank=True, help_text='Epoch with the lowest validation loss', null=True)),
                ('best_val_loss', models.FloatField(blank=True, help_text='Lowest validation MSE', null=True)),
                ('checkpoint_file', models.CharField(blank=True, help_text='Path of the LMPD checkpoint', max_length=500)),
            ],
            options={
                'verbose_name': 'Training Run',
                'verbose_name_plural': 'Training Runs',
                'ordering': ['-created_at'],
                'abstract': False,
            },
        ),
    ]
